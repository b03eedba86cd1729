"""Moments of the slope field, belt parameters, localization intervals and the
Gaussian-approximation Kac-Rice density of modes.

Per sample, with ``z = t - X`` and ``X ~ N(0, 1)``::

    G(t)  = z exp(-beta z^2 / 2)
    G'(t) = (1 - beta z^2) exp(-beta z^2 / 2)

and ``(F(t), F'(t))`` has mean ``sqrt(n) (E G, E G')`` and the per-sample
covariance of ``(G, G')``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from mode_atlas.errors import InvalidInputError, InvalidMomentError

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MomentPack:
    t: float
    beta: float
    n: int
    mu: np.ndarray
    sigma: np.ndarray
    exact: bool


class BeltParams(NamedTuple):
    A: float
    alpha: float
    delta: float
    Delta: float


class RawMoments(NamedTuple):
    EG: float
    EGp: float
    EG2: float
    EGGp: float
    EGp2: float


@dataclass(frozen=True)
class Belts:
    """Symmetric intervals ``T = [-t_end, t_end]`` and ``T' = [-tprime_end, tprime_end]``.

    An endpoint of ``None`` means the interval is empty.
    """

    t_end: float | None
    tprime_end: float | None
    omega: float

    @property
    def T(self) -> tuple[float, float] | None:
        return None if self.t_end is None else (-self.t_end, self.t_end)

    @property
    def Tprime(self) -> tuple[float, float] | None:
        return None if self.tprime_end is None else (-self.tprime_end, self.tprime_end)


def _check(beta, n):
    if not (math.isfinite(beta) and beta > 0):
        raise InvalidInputError(f"beta must be positive and finite, got {beta!r}")
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")


def raw_moments(t: float, beta: float) -> RawMoments:
    """Closed forms of E G, E G', E G^2, E G G', E G'^2 obtained by completing the square."""
    b, t2 = beta, t * t
    e1 = math.exp(-b * t2 / (2 * (b + 1)))
    e2 = math.exp(-b * t2 / (2 * b + 1))
    q = 2 * b + 1
    return RawMoments(
        EG=t * e1 / (b + 1) ** 1.5,
        EGp=e1 * (1 + b - b * t2) / (b + 1) ** 2.5,
        EG2=e2 * (t2 + q) / q**2.5,
        EGGp=e2 * (-2 * b * b * t + b * t - b * t * t2 + t) / q**3.5,
        EGp2=e2
        * (12 * b**4 + 4 * b**3 * (t2 + 5) + b * b * (t2 * t2 - 2 * t2 + 15) - 2 * b * (t2 - 3) + 1)
        / q**4.5,
    )


def exact_moments(t: float, beta: float, n: int) -> MomentPack:
    _check(beta, n)
    r = raw_moments(t, beta)
    mean = np.array([r.EG, r.EGp])
    second = np.array([[r.EG2, r.EGGp], [r.EGGp, r.EGp2]])
    return MomentPack(float(t), float(beta), int(n), math.sqrt(n) * mean, second - np.outer(mean, mean), True)


def asymptotic_moments(t: float, beta: float, n: int) -> MomentPack:
    """Leading-order mean and covariance as ``beta`` grows."""
    _check(beta, n)
    g = math.exp(-0.5 * t * t) * beta**-1.5
    mu = math.sqrt(n) * g * np.array([t, 1.0 - t * t])
    sigma = 2**-2.5 * g * np.array([[2.0, -t], [-t, 3.0 * beta]])
    return MomentPack(float(t), float(beta), int(n), mu, sigma, False)


def belt_params(t: float, beta: float, n: int) -> BeltParams:
    """``A_t``, ``alpha_t``, ``delta_t`` and ``Delta_t`` from the leading-order moments.

    The leading inverse covariance is ``(alpha_t / 2) [[3 beta, t], [t, 2]]``;
    ``A_t`` is the part of the quadratic form at ``(0, y)`` that does not
    depend on ``y`` and ``delta_t`` its minimizer in ``y``.  ``delta_t`` is
    written without the ``mu_1 / t`` quotient so ``t = 0`` needs no special case.
    """
    _check(beta, n)
    g = math.exp(-0.5 * t * t)
    alpha = 2**2.5 / 3 * math.sqrt(beta) / g
    mu1 = math.sqrt(n) * beta**-1.5 * g * t
    A = 1.5 * beta * alpha * mu1 * mu1
    delta = math.sqrt(n) * beta**-1.5 * g * (1.0 - 0.5 * t * t)
    return BeltParams(A, alpha, delta, delta + math.sqrt(A / alpha))


def omega(beta: float) -> float:
    """Slowly growing margin ``max(1, sqrt(log log beta))``."""
    if beta <= math.e:
        return 1.0
    return max(1.0, math.sqrt(math.log(math.log(beta))))


OMEGA_RULE = "sqrt(loglog)"


def intervals_T(n: int, beta: float) -> Belts:
    """The truncation interval ``T`` and the inner interval ``T'``.

    ``T'`` is clipped to ``T`` so that it is always a sub-interval.
    """
    if int(n) != n or n < 2:
        raise InvalidInputError(f"intervals need n >= 2, got {n!r}")
    _check(beta, n)
    w = omega(beta)
    ln, lb = math.log(n), math.log(beta)
    rt = 2 * ln - lb - w
    t_end = math.sqrt(rt) if rt > 0 else None
    rp = 2 * ln - 3 * lb
    tp_end = math.sqrt(rp) if (beta <= n ** (2 / 3) and rp > 0) else None
    if tp_end is not None:
        tp_end = None if t_end is None else min(tp_end, t_end)
    return Belts(t_end, tp_end, w)


def kr_density(mp: MomentPack) -> float:
    """Expected up-crossings of 0 per unit length for a bivariate normal ``(F, F')``.

    Conditioning ``F' | F = 0 ~ N(m, s^2)`` gives
    ``pdf_F(0) * (s phi(m/s) + m Phi(m/s))``.
    """
    S = np.asarray(mp.sigma, dtype=float)
    mu = np.asarray(mp.mu, dtype=float)
    s11, s12, s22 = S[0, 0], S[0, 1], S[1, 1]
    det = s11 * s22 - s12 * s12
    if not (s11 > 0 and s22 > 0 and det > 0 and np.isclose(S[1, 0], s12, rtol=1e-12, atol=0.0)):
        raise InvalidMomentError("covariance is not symmetric positive definite")
    pdf0 = math.exp(-0.5 * mu[0] ** 2 / s11) / math.sqrt(2 * math.pi * s11)
    m = mu[1] - s12 / s11 * mu[0]
    s = math.sqrt(det / s11)
    z = m / s
    # phi(z) + z Phi(z) written through erfcx to survive z << 0
    tail = math.exp(-0.5 * z * z) * (1.0 / SQRT_2PI + 0.5 * z * special.erfcx(-z / math.sqrt(2.0)))
    return float(pdf0 * s * max(tail, 0.0))


def kr_density_at(t: float, beta: float, n: int) -> float:
    return kr_density(exact_moments(t, beta, n))


def kr_integral(n: int, beta: float, region: tuple[float, float] | None) -> float:
    """Expected number of modes in ``region`` under the Gaussian approximation."""
    if region is None:
        return 0.0
    a, b = map(float, region)
    if b <= a:
        return 0.0
    tol = 1e-6 * math.sqrt(beta) * (b - a)
    points = [p for p in (0.0,) if a < p < b]
    if n >= 2:
        belts = intervals_T(n, beta)
        for e in (belts.t_end, belts.tprime_end):
            if e is not None:
                points += [p for p in (-e, e) if a < p < b]
    val, _ = integrate.quad(
        kr_density_at, a, b, args=(beta, n), epsabs=tol, epsrel=1e-8, limit=500, points=sorted(set(points)) or None
    )
    return val


def gaussian_moment(k: int, alpha: float) -> float:
    """``int_0^inf u^k exp(-alpha u^2) du = Gamma((k+1)/2) alpha^(-(k+1)/2) / 2``."""
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    return 0.5 * math.gamma((k + 1) / 2) * alpha ** (-(k + 1) / 2)


def snr_squared(t: float, beta: float, n: int) -> float:
    """Squared signal-to-noise ratio of ``F(t)``; equals ``A_t`` at leading order."""
    mp = asymptotic_moments(t, beta, n)
    return float(mp.mu[0] ** 2 / mp.sigma[0, 0])
