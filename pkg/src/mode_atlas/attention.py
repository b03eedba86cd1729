"""Self-attention particle dynamics on the unit circle and metastable cluster counts.

Each particle moves along

    dx_i/dtau = sum_j softmax_j(beta <x_i, x_j>) (x_j - <x_i, x_j> x_i),

i.e. the softmax-weighted average of the others projected onto the tangent
line at ``x_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from mode_atlas.errors import InvalidInputError, NumericError

TWO_PI = 2.0 * math.pi
FIG2_TAU = 20.0
FIG2_DT = 0.05


@dataclass(frozen=True)
class ParticleState:
    angles: np.ndarray
    beta: float
    time: float = 0.0

    def __post_init__(self):
        a = np.mod(np.asarray(self.angles, dtype=float).ravel(), TWO_PI)
        # mod can round up to exactly 2 pi
        a[a >= TWO_PI] = 0.0
        if a.size == 0:
            raise InvalidInputError("need at least one particle")
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite particle angle")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InvalidInputError(f"beta must be positive and finite, got {self.beta!r}")
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n(self) -> int:
        return int(self.angles.size)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    @classmethod
    def from_points(cls, X: np.ndarray, beta: float, time: float = 0.0) -> ParticleState:
        return cls(np.arctan2(X[:, 1], X[:, 0]), beta, time)


@dataclass(frozen=True)
class ClusterReport:
    count: int
    centers: tuple[float, ...]
    sizes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"count": self.count, "centers": list(self.centers), "sizes": list(self.sizes)}


def velocity(X: np.ndarray, beta: float) -> np.ndarray:
    """Tangent velocities for unit vectors stacked as rows of ``X``."""
    G = X @ X.T
    E = np.exp(beta * (G - G.max(axis=1, keepdims=True)))
    M = (E @ X) / E.sum(axis=1, keepdims=True)
    return M - np.sum(M * X, axis=1, keepdims=True) * X


def attention_rhs(state: ParticleState) -> np.ndarray:
    return velocity(state.points, state.beta)


def integrate(state: ParticleState, dt: float, steps: int) -> ParticleState:
    """Classical RK4 steps, projecting back onto the circle after each step."""
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidInputError(f"dt must be positive, got {dt!r}")
    if int(steps) != steps or steps < 0:
        raise InvalidInputError(f"steps must be a non-negative integer, got {steps!r}")
    X = state.points
    b = state.beta
    for _ in range(int(steps)):
        k1 = velocity(X, b)
        k2 = velocity(X + 0.5 * dt * k1, b)
        k3 = velocity(X + 0.5 * dt * k2, b)
        k4 = velocity(X + dt * k3, b)
        X = X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        if not np.all(np.isfinite(X)):
            raise NumericError("particle state became non-finite")
    return ParticleState.from_points(X, b, state.time + steps * dt)


def interaction_energy(state: ParticleState) -> float:
    """``sum_{i,j} exp(beta <x_i, x_j>)`` divided by ``exp(beta)``."""
    X = state.points
    return float(np.exp(state.beta * (X @ X.T - 1.0)).sum())


def count_clusters(state: ParticleState, gap_fraction: float = 0.25) -> ClusterReport:
    """Split the sorted angles wherever the circular gap reaches ``gap_fraction * 2 pi / sqrt(beta)``."""
    a = np.sort(state.angles)
    thr = gap_fraction * TWO_PI / math.sqrt(state.beta)
    gaps = np.diff(np.append(a, a[0] + TWO_PI))
    cuts = np.flatnonzero(gaps >= thr)
    if cuts.size == 0:
        groups = [a]
    else:
        # rotate so the first group starts right after a cut
        start = (cuts[-1] + 1) % a.size
        rolled = np.roll(a, -start)
        bounds = np.sort((cuts - start + 1) % a.size)
        bounds = bounds[bounds > 0]
        groups = np.split(rolled, bounds)
    centers = tuple(float(np.mod(np.angle(np.exp(1j * g).mean()), TWO_PI)) for g in groups)
    sizes = tuple(int(g.size) for g in groups)
    return ClusterReport(len(groups), centers, sizes)


def uniform_state(n: int, beta: float, seed: int) -> ParticleState:
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return ParticleState(rng.uniform(0.0, TWO_PI, int(n)), beta)


def metastable_run(
    n: int, beta: float, seed: int, tau: float = FIG2_TAU, dt: float = FIG2_DT, gap_fraction: float = 0.25
) -> tuple[ParticleState, ClusterReport]:
    """Uniform start, integrate to ``tau``, count clusters."""
    steps = int(round(tau / dt))
    final = integrate(uniform_state(n, beta, seed), dt, steps)
    return final, count_clusters(final, gap_fraction)
