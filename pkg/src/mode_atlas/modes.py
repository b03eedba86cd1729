"""Enumerate the critical points of a realized KDE and check them against mean-shift
and the scale-space bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from mode_atlas.errors import DivergedStartError, InvalidInputError
from mode_atlas.gkde import SampleSet, kde_eval, scaled_derivs, scaled_slope

GRID_DIVISOR = 8
PAD_BANDWIDTHS = 3.0
REL_WIDTH = 1e-12


class CriticalPoint(NamedTuple):
    location: float
    kind: Literal["maximum", "minimum"]
    value: float


class RegionCounts(NamedTuple):
    in_tprime: int
    in_t_not_tprime: int
    outside_t: int


@dataclass(frozen=True)
class ModeReport:
    criticals: tuple[CriticalPoint, ...]
    mode_count: int
    counts_by_region: RegionCounts | None

    @property
    def maxima(self) -> np.ndarray:
        return np.array([c.location for c in self.criticals if c.kind == "maximum"])

    @property
    def minima(self) -> np.ndarray:
        return np.array([c.location for c in self.criticals if c.kind == "minimum"])

    def to_dict(self) -> dict:
        return {
            "mode_count": self.mode_count,
            "counts_by_region": None if self.counts_by_region is None else self.counts_by_region._asdict(),
            "criticals": [c._asdict() for c in self.criticals],
        }


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def _bisect_all(s: SampleSet, lo: np.ndarray, hi: np.ndarray, sign_lo: np.ndarray) -> np.ndarray:
    """Shrink every bracket [lo, hi] of a slope sign change in lockstep."""
    lo, hi = lo.copy(), hi.copy()
    active = np.ones(lo.size, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        mid = 0.5 * (lo[idx] + hi[idx])
        for k, i in enumerate(idx):
            m = mid[k]
            if m <= lo[i] or m >= hi[i]:
                active[i] = False
                continue
            sm = _sign(scaled_slope(s, m))
            if sm == 0:
                lo[i] = hi[i] = m
            elif sm == sign_lo[i]:
                lo[i] = m
            else:
                hi[i] = m
            if hi[i] - lo[i] <= REL_WIDTH * max(1.0, abs(m)):
                active[i] = False
    return 0.5 * (lo + hi)


def _fold_split(s: SampleSet, a: float, b: float, sign: int) -> float | None:
    """A point in ``(a, b)`` where the slope takes sign ``-sign``, or None.

    The slope has sign ``sign`` at both ends and the curvature shows it turning
    back toward zero inside, so its extremum is bisected on the curvature sign.
    """
    while True:
        m = 0.5 * (a + b)
        if m <= a or m >= b or b - a <= REL_WIDTH * max(1.0, abs(m)):
            return None
        d1, d2 = scaled_derivs(s, m)
        if _sign(d1) != sign:
            return m
        # a positive slope is heading for its minimum while the curvature is negative
        if _sign(d2) == -sign:
            a = m
        else:
            b = m


def critical_points(s: SampleSet, grid_divisor: int = GRID_DIVISOR) -> tuple[np.ndarray, np.ndarray]:
    """Locations of every slope sign change and the sign of the slope just left of each.

    A left sign of +1 means the slope goes from rising to falling: a maximum.
    Grid cells whose ends share a slope sign are also searched when the curvature
    shows the slope dipping toward zero inside, which catches a close
    maximum-minimum pair near a fold.
    """
    h = s.h
    x = s.samples
    grid = np.arange(x[0] - PAD_BANDWIDTHS * h, x[-1] + PAD_BANDWIDTHS * h + h / grid_divisor, h / grid_divisor)
    derivs = np.array([scaled_derivs(s, g) for g in grid])
    signs = np.sign(derivs[:, 0]).astype(int)
    curv = np.sign(derivs[:, 1]).astype(int)

    lo, hi, left = [], [], []
    for j in range(grid.size - 1):
        sj, sk = signs[j], signs[j + 1]
        if sj != 0 and sj == sk and curv[j] == -sj and curv[j + 1] == sj:
            m = _fold_split(s, grid[j], grid[j + 1], sj)
            if m is not None:
                lo += [grid[j], m]
                hi += [m, grid[j + 1]]
                left += [sj, -sj]

    nz = np.flatnonzero(signs)
    exact, exact_left = [], []
    for j, k in zip(nz[:-1], nz[1:]):
        if signs[j] == signs[k]:
            continue
        if k == j + 1:
            lo.append(grid[j])
            hi.append(grid[k])
            left.append(signs[j])
        else:
            # the slope vanished exactly on the grid between two opposite signs
            exact.append(grid[(j + k) // 2] if (k - j) % 2 == 0 else 0.5 * (grid[(j + k) // 2] + grid[(j + k + 1) // 2]))
            exact_left.append(signs[j])
    roots = _bisect_all(s, np.array(lo), np.array(hi), np.array(left)) if lo else np.empty(0)
    locs = np.concatenate([roots, np.array(exact, dtype=float)])
    lefts = np.concatenate([np.array(left, dtype=int), np.array(exact_left, dtype=int)])
    order = np.argsort(locs, kind="stable")
    return locs[order], lefts[order]


def classify_regions(maxima: np.ndarray, n: int, beta: float) -> RegionCounts | None:
    from mode_atlas.kacrice import intervals_T

    if n < 2:
        return None
    belts = intervals_T(n, beta)
    a = np.abs(np.asarray(maxima, dtype=float))
    t_end = belts.t_end if belts.t_end is not None else -math.inf
    tp_end = belts.tprime_end if belts.tprime_end is not None else -math.inf
    in_tp = int(np.count_nonzero(a <= tp_end))
    in_t = int(np.count_nonzero(a <= t_end))
    return RegionCounts(in_tp, in_t - in_tp, int(a.size) - in_t)


def find_modes(s: SampleSet, grid_divisor: int = GRID_DIVISOR) -> ModeReport:
    """Locate and classify every critical point of the KDE of ``s``.

    The slope is scanned on a grid of step ``h / grid_divisor`` spanning the
    samples plus three bandwidths, and each sign change is bisected down to
    a relative width of 1e-12.  Tangential critical points are missed.
    """
    locs, lefts = critical_points(s, grid_divisor)
    criticals = []
    for t, left in zip(locs, lefts):
        curv = scaled_slope(s, t, order=2)
        if curv < 0:
            kind = "maximum"
        elif curv > 0:
            kind = "minimum"
        else:
            kind = "maximum" if left > 0 else "minimum"
        criticals.append(CriticalPoint(float(t), kind, kde_eval(s, t, 0)))
    maxima = np.array([c.location for c in criticals if c.kind == "maximum"])
    return ModeReport(tuple(criticals), int(maxima.size), classify_regions(maxima, s.n, s.beta))


def mean_shift(s: SampleSet, start: float, max_iters: int = 100_000, tol: float | None = None) -> float:
    """Iterate the Gaussian mean-shift map from ``start`` until the step drops below ``tol``."""
    start = float(start)
    if not math.isfinite(start):
        raise InvalidInputError("start must be finite")
    if tol is None:
        tol = 1e-10 * s.h
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    x = s.samples
    t = start
    for _ in range(int(max_iters)):
        w = np.exp(-0.5 * s.beta * (t - x) ** 2)
        total = w.sum()
        if total == 0.0:
            raise DivergedStartError(f"every kernel weight underflows at t={t!r}")
        new = float((w * x).sum() / total)
        step = new - t
        t = new
        if abs(step) < tol:
            break
    return t


def scale_space_check(s: SampleSet, report: ModeReport, a: float) -> bool:
    """True iff no tail beyond ``a`` (or ``-a``) holds more modes than samples."""
    maxima = report.maxima
    x = s.samples
    right = np.count_nonzero(maxima > a) <= np.count_nonzero(x >= a)
    left = np.count_nonzero(maxima < -a) <= np.count_nonzero(x <= -a)
    return bool(right and left)
