"""Gaussian kernel density estimator of a 1-D sample and the rescaled slope field.

The KDE with inverse squared bandwidth ``beta`` (bandwidth ``h = beta**-0.5``) is

    P(t) = sqrt(beta) / (n sqrt(2 pi)) * sum_i exp(-beta (t - X_i)^2 / 2)

and the slope field whose zero up-crossings are exactly the modes of ``P`` is

    F(t) = n**-0.5 * sum_i (t - X_i) exp(-beta (t - X_i)^2 / 2) = -sqrt(2 pi n / beta^3) P'(t).

Samples are kept sorted so every evaluation only touches the samples within
``WINDOW`` bandwidths of the evaluation point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from mode_atlas.errors import InvalidInputError

WINDOW = 10.0
EXP_FLOOR = -745.0
SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SampleSet:
    """An immutable, sorted draw ``X_1..X_n`` together with ``beta``."""

    samples: np.ndarray
    beta: float

    def __post_init__(self):
        x = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if x.size == 0:
            raise InvalidInputError("sample set is empty")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("samples must be finite")
        beta = float(self.beta)
        if not (math.isfinite(beta) and beta > 0):
            raise InvalidInputError(f"beta must be positive and finite, got {self.beta!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return int(self.samples.size)

    @property
    def h(self) -> float:
        return self.beta ** -0.5

    def window(self, t: float, radius: float) -> np.ndarray:
        lo = np.searchsorted(self.samples, t - radius, side="left")
        hi = np.searchsorted(self.samples, t + radius, side="right")
        return self.samples[lo:hi]

    def negated(self) -> SampleSet:
        return SampleSet(-self.samples, self.beta)

    def shifted(self, c: float) -> SampleSet:
        return SampleSet(self.samples + c, self.beta)


class FieldValue(NamedTuple):
    f: float
    fprime: float


def _check_t(t) -> float:
    t = float(t)
    if not math.isfinite(t):
        raise InvalidInputError(f"evaluation point must be finite, got {t!r}")
    return t


def _gauss(arg: np.ndarray) -> np.ndarray:
    # explicit flush instead of relying on denormal underflow
    return np.where(arg < EXP_FLOOR, 0.0, np.exp(np.maximum(arg, EXP_FLOOR)))


def _kernel_sums(s: SampleSet, t: float, window: float | None):
    """Return (sum e, sum u e, sum u^2 e) with u = t - X_i over the window."""
    x = s.samples if window is None else s.window(t, window * s.h)
    u = t - x
    e = _gauss(-0.5 * s.beta * u * u)
    ue = u * e
    return e.sum(), ue.sum(), (u * ue).sum()


def kde_eval(s: SampleSet, t: float, order: int = 0, window: float | None = WINDOW) -> float:
    """Evaluate the KDE (``order=0``) or its first or second derivative at ``t``.

    ``window=None`` sums over every sample; otherwise only samples with
    ``|t - X_i| <= window * h`` contribute, with error at most
    :func:`truncation_bound`.
    """
    if order not in (0, 1, 2):
        raise InvalidInputError(f"order must be 0, 1 or 2, got {order!r}")
    t = _check_t(t)
    s0, s1, s2 = _kernel_sums(s, t, window)
    c = math.sqrt(s.beta) / (s.n * SQRT_2PI)
    if order == 0:
        return c * s0
    if order == 1:
        return -c * s.beta * s1
    return c * s.beta * (s.beta * s2 - s0)


def kde_grid(s: SampleSet, ts, order: int = 0, window: float | None = WINDOW) -> np.ndarray:
    return np.array([kde_eval(s, t, order, window) for t in np.asarray(ts, dtype=float).ravel()])


def _tail_factor(order: int, W: float) -> float:
    """``sup_{|v| >= W} |He_order(v)| exp(-v^2/2)``."""
    g = lambda v: abs((1.0, v, v * v - 1.0)[order]) * math.exp(-0.5 * v * v)
    peak = (0.0, 1.0, math.sqrt(3.0))[order]
    return max(g(W), g(peak)) if W < peak else g(W)


def truncation_bound(s: SampleSet, t: float, order: int = 0, window: float = WINDOW) -> float:
    """Absolute error bound of the windowed :func:`kde_eval` at ``t``.

    Each omitted sample contributes at most the supremum of the scaled kernel
    factor ``|He_k(v)| exp(-v^2/2)`` over ``|v| > W``.
    """
    inside = s.window(t, window * s.h).size
    omitted = s.n - inside
    return omitted / s.n * math.sqrt(s.beta / (2 * math.pi)) * s.beta ** (order / 2) * _tail_factor(order, window)


def field_f(s: SampleSet, t: float, window: float | None = WINDOW) -> FieldValue:
    """Return ``(F(t), F'(t))`` by direct summation of the per-sample terms."""
    t = _check_t(t)
    s0, s1, s2 = _kernel_sums(s, t, window)
    r = 1.0 / math.sqrt(s.n)
    return FieldValue(r * s1, r * (s0 - s.beta * s2))


def scaled_derivs(s: SampleSet, t: float, window: float = WINDOW) -> tuple[float, float]:
    """Sign-faithful multiples of ``P'(t)`` and ``P''(t)``, sharing one positive factor.

    Exponents are taken relative to the nearest sample, so the values never
    underflow in sparse tails, and the window keeps every sample whose
    kernel is within ``exp(-window^2/2)`` of the dominant one.
    """
    x = s.samples
    i = np.searchsorted(x, t)
    d0 = min(abs(t - x[i - 1]) if i > 0 else math.inf, abs(x[i] - t) if i < x.size else math.inf)
    radius = math.sqrt(d0 * d0 + (window * s.h) ** 2)
    u = t - s.window(t, radius)
    e = np.exp(-0.5 * s.beta * (u * u - d0 * d0))
    return float(-(u * e).sum()), float((e * (s.beta * u * u - 1.0)).sum())


def scaled_slope(s: SampleSet, t: float, order: int = 1, window: float = WINDOW) -> float:
    """Sign-faithful multiple of ``P'(t)`` (order 1) or ``P''(t)`` (order 2)."""
    return scaled_derivs(s, t, window)[order - 1]


def draw_samples(n: int, beta: float, seed: int) -> SampleSet:
    """Draw ``n`` iid standard normal samples from a Philox stream keyed by ``seed``."""
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")
    if int(seed) != seed or not 0 <= seed < 2**64:
        raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return SampleSet(rng.standard_normal(int(n)), beta)
