"""Third-order Edgeworth correction for the standardized slope field.

``Y = Sigma^{-1/2} ((G, G') - E(G, G'))`` is the whitened single-sample vector
(symmetric square root).  Its third cumulants ``kappa^(k, 3-k)`` feed the
correction

    psi(x) = phi(x) * sum_k kappa^(k, 3-k) / (k! (3-k)!) He_k(x_1) He_{3-k}(x_2)

and the two-term model of the density of ``n^{-1/2} sum_i Y_i`` is
``phi + n^{-1/2} psi``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite, hermite_e
from scipy import integrate, special

from mode_atlas.errors import InvalidInputError, NumericError
from mode_atlas.gkde import WINDOW
from mode_atlas.kacrice import exact_moments

GH_NODES = 200
HIST_EDGE = 6.0
HIST_BINS = 60
BLOCK = 10_000
SAMPLE_BUDGET = 4_000_000

_GH_X, _GH_W = hermite.hermgauss(GH_NODES)
# positive half of the symmetric rule; pairing +x with -x keeps odd moments exactly zero at t = 0
_GH_XP, _GH_WP = np.abs(_GH_X[GH_NODES // 2 :]), _GH_W[GH_NODES // 2 :]


@dataclass(frozen=True)
class EdgeworthPack:
    t: float
    beta: float
    kappa: tuple[float, float, float, float]  # kappa^(k, 3-k) for k = 0..3
    eta3: float
    eta_bound3: float
    mean: np.ndarray
    sigma: np.ndarray
    whitener: np.ndarray


@dataclass(frozen=True)
class ValidityRecord:
    n: int
    beta: float
    t: float
    trials: int
    l1_normal: float
    l1_edgeworth: float
    outside_fraction: float

    @property
    def improved(self) -> bool:
        return self.l1_edgeworth <= self.l1_normal

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "beta": self.beta,
            "t": self.t,
            "trials": self.trials,
            "l1_normal": self.l1_normal,
            "l1_edgeworth": self.l1_edgeworth,
            "outside_fraction": self.outside_fraction,
            "improved": self.improved,
        }


def _mono(z: np.ndarray, a: int, b: int, beta: float) -> np.ndarray:
    # repeated products, not pow: keeps (-z)^a == -(z^a) bit-exact for odd a
    out = np.ones_like(z)
    for _ in range(a):
        out = out * z
    q = 1.0 - beta * z * z
    for _ in range(b):
        out = out * q
    return out


def raw_moment_gh(a: int, b: int, t: float, beta: float) -> float:
    """``E[G^a G'^b]`` by Gauss-Hermite quadrature after completing the square.

    The integrand ``z^a (1 - beta z^2)^b`` is weighted by
    ``exp(-(a+b) beta z^2 / 2 - (z - t)^2 / 2)``, whose centre and width
    depend on the total kernel power ``a + b``.
    """
    k = a + b
    if k == 0:
        return 1.0
    c = 0.5 * (k * beta + 1.0)
    shift = t / (k * beta + 1.0)
    zp = _GH_XP / math.sqrt(c) + shift
    zm = -_GH_XP / math.sqrt(c) + shift
    f = _mono(zp, a, b, beta) + _mono(zm, a, b, beta)
    scale = math.exp(-k * beta * t * t / (2.0 * (k * beta + 1.0))) / (math.sqrt(2.0 * math.pi) * math.sqrt(c))
    return scale * float(np.dot(_GH_WP, f))


def _sym_inv_sqrt(S: np.ndarray) -> np.ndarray:
    if S[0, 1] == 0.0 and S[1, 0] == 0.0 and S[0, 0] > 0 and S[1, 1] > 0:
        return np.diag(1.0 / np.sqrt(np.diag(S)))
    w, V = np.linalg.eigh(S)
    if not np.all(w > 0):
        raise NumericError(f"covariance not positive definite: eigenvalues {w}")
    return (V / np.sqrt(w)) @ V.T


def _third_central(t: float, beta: float, m: np.ndarray) -> np.ndarray:
    raw = {(a, b): raw_moment_gh(a, b, t, beta) for a in range(4) for b in range(4 - a)}

    def r(*ix):
        return raw[(ix.count(0), ix.count(1))]

    mu3 = np.empty((2, 2, 2))
    for i, j, k in np.ndindex(2, 2, 2):
        mu3[i, j, k] = r(i, j, k) - m[i] * r(j, k) - m[j] * r(i, k) - m[k] * r(i, j) + 2.0 * m[i] * m[j] * m[k]
    return mu3


def _eta(t: float, beta: float, m: np.ndarray, W: np.ndarray, s: int = 3) -> float:
    h = beta**-0.5

    def integrand(z):
        e = math.exp(-0.5 * beta * z * z)
        d = np.array([z * e, (1.0 - beta * z * z) * e]) - m
        y = W @ d
        return math.exp(-0.5 * (z - t) ** 2) / math.sqrt(2 * math.pi) * float(np.hypot(y[0], y[1])) ** s

    L = 12.0 * h
    pieces = [(-np.inf, -L), (-L, L), (L, np.inf)]
    total = 0.0
    for lo, hi in pieces:
        kw = {"points": [0.0, -h, h, -math.sqrt(3) * h, math.sqrt(3) * h]} if math.isfinite(lo) and math.isfinite(hi) else {}
        val, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400, **kw)
        if not math.isfinite(val) or err > 1e-6 * max(abs(val), 1e-300):
            raise NumericError(f"eta quadrature did not converge on [{lo}, {hi}]: value={val}, error={err}")
        total += val
    return total


def standardized_cumulants(t: float, beta: float) -> EdgeworthPack:
    """Third cumulants of the whitened single-sample vector at ``t``."""
    t, beta = float(t), float(beta)
    mp = exact_moments(t, beta, 1)
    m = np.array([raw_moment_gh(1, 0, t, beta), raw_moment_gh(0, 1, t, beta)])
    second = np.array(
        [
            [raw_moment_gh(2, 0, t, beta), raw_moment_gh(1, 1, t, beta)],
            [raw_moment_gh(1, 1, t, beta), raw_moment_gh(0, 2, t, beta)],
        ]
    )
    sigma = second - np.outer(m, m)
    scale = np.sqrt(np.outer(np.diag(mp.sigma), np.diag(mp.sigma)))
    if np.any(np.abs(sigma - mp.sigma) > 1e-8 * scale):
        raise NumericError("quadrature covariance disagrees with the closed form")
    W = _sym_inv_sqrt(sigma)
    mu3 = _third_central(t, beta, m)
    k3 = np.einsum("ai,bj,ck,ijk->abc", W, W, W, mu3)
    # kappa^(k, 3-k): k indices on the first coordinate
    kappa = tuple(float(k3[tuple([0] * k + [1] * (3 - k))]) for k in range(4))
    eta3 = _eta(t, beta, m, W, 3)
    return EdgeworthPack(t, beta, kappa, eta3, (beta * math.exp(t * t)) ** 0.25, m, sigma, W)


def hermite2(alpha: tuple[int, int], x) -> np.ndarray | float:
    """Bivariate probabilists' Hermite polynomial ``He_a1(x_1) He_a2(x_2)``."""
    a1, a2 = alpha
    if a1 < 0 or a2 < 0 or a1 + a2 > 3:
        raise InvalidInputError(f"multi-index must be non-negative with order <= 3, got {alpha!r}")
    x = np.asarray(x, dtype=float)
    c1 = np.zeros(a1 + 1)
    c1[a1] = 1.0
    c2 = np.zeros(a2 + 1)
    c2[a2] = 1.0
    out = hermite_e.hermeval(x[..., 0], c1) * hermite_e.hermeval(x[..., 1], c2)
    return float(out) if out.ndim == 0 else out


def _phi2(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2)) / (2.0 * math.pi)


def _coefficients(kappa) -> list[float]:
    return [kappa[k] / (math.factorial(k) * math.factorial(3 - k)) for k in range(4)]


def psi_eval(ep: EdgeworthPack, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    c = _coefficients(ep.kappa)
    poly = sum(c[k] * hermite2((k, 3 - k), x) for k in range(4))
    out = _phi2(x) * poly
    return float(out) if np.ndim(out) == 0 else out


def edgeworth_density(ep: EdgeworthPack, n: int, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    out = _phi2(x) + psi_eval(ep, x) / math.sqrt(n)
    return float(out) if np.ndim(out) == 0 else out


def _hermite_phi_mass(j: int, edges: np.ndarray) -> np.ndarray:
    """``int He_j(x) phi(x) dx`` over each consecutive pair of ``edges``."""
    if j == 0:
        return np.diff(special.ndtr(edges))
    c = np.zeros(j)
    c[j - 1] = 1.0
    g = hermite_e.hermeval(edges, c) * np.exp(-0.5 * edges**2) / math.sqrt(2 * math.pi)
    return g[:-1] - g[1:]


def bin_masses(ep: EdgeworthPack | None, n: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact masses of ``phi`` and of ``n^{-1/2} psi`` on a square grid of bins."""
    base = _hermite_phi_mass(0, edges)
    normal = np.outer(base, base)
    corr = np.zeros_like(normal)
    if ep is not None:
        for k, ck in enumerate(_coefficients(ep.kappa)):
            corr += ck * np.outer(_hermite_phi_mass(k, edges), _hermite_phi_mass(3 - k, edges))
        corr /= math.sqrt(n)
    return normal, corr


def _truncated_normal(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    if lo >= 0:
        return -_truncated_normal(rng, -hi, -lo, size)
    a, b = special.ndtr(lo), special.ndtr(hi)
    return special.ndtri(a + (b - a) * rng.random(size))


def simulate_field(n: int, beta: float, t: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``trials`` realizations of ``(F(t), F'(t))``.

    Only samples within ``WINDOW`` bandwidths of ``t`` matter, so the number
    in the window is drawn as a binomial and the positions from the normal
    truncated to the window.
    """
    h = beta**-0.5
    lo, hi = t - WINDOW * h, t + WINDOW * h
    p = float(special.ndtr(hi) - special.ndtr(lo)) if hi <= 0 else float(special.ndtr(-lo) - special.ndtr(-hi))
    counts = rng.binomial(n, p, size=trials)
    out = np.empty((trials, 2))
    # bound the number of positions held in memory at once
    ends = np.cumsum(counts)
    start = 0
    while start < trials:
        base = ends[start - 1] if start else 0
        stop = max(start + 1, int(np.searchsorted(ends, base + SAMPLE_BUDGET, side="right")))
        c = counts[start:stop]
        u = t - _truncated_normal(rng, lo, hi, int(c.sum()))
        e = np.exp(-0.5 * beta * u * u)
        owner = np.repeat(np.arange(c.size), c)
        out[start:stop, 0] = np.bincount(owner, weights=u * e, minlength=c.size)
        out[start:stop, 1] = np.bincount(owner, weights=(1.0 - beta * u * u) * e, minlength=c.size)
        start = stop
    return out / math.sqrt(n)


def validity_diagnostic(
    n: int, beta: float, t: float, trials: int, seed: int, threads: int = 1
) -> ValidityRecord:
    """L1 distance of the simulated standardized field to ``phi`` and to ``phi + n^{-1/2} psi``.

    Trials run in fixed blocks of ``BLOCK`` with their own seed streams, so
    the result does not depend on ``threads``.
    """
    if trials < 100:
        raise InvalidInputError("validity_diagnostic needs at least 100 trials")
    ep = standardized_cumulants(t, beta)
    mu = math.sqrt(n) * ep.mean
    nblocks = -(-trials // BLOCK)
    sizes = [min(BLOCK, trials - b * BLOCK) for b in range(nblocks)]
    edges = np.linspace(-HIST_EDGE, HIST_EDGE, HIST_BINS + 1)

    def block(b: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))
        z = (simulate_field(n, beta, t, sizes[b], rng) - mu) @ ep.whitener.T
        hist, _, _ = np.histogram2d(z[:, 0], z[:, 1], bins=[edges, edges])
        return hist

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            hists = list(pool.map(block, range(nblocks)))
    else:
        hists = [block(b) for b in range(nblocks)]
    counts = sum(hists)
    emp = counts / trials
    normal, corr = bin_masses(ep, n, edges)
    out_emp = (trials - counts.sum()) / trials

    def l1(model):
        return float(np.abs(emp - model).sum() + abs(out_emp - (1.0 - model.sum())))

    return ValidityRecord(n, float(beta), float(t), int(trials), l1(normal), l1(normal + corr), float(out_emp))
