"""Monte Carlo sweeps over the bandwidth, belt statistics, power-law fits and persistence."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mode_atlas.errors import InsufficientDataError, InvalidInputError
from mode_atlas.gkde import WINDOW, draw_samples
from mode_atlas.kacrice import OMEGA_RULE, intervals_T, kr_density_at, omega
from mode_atlas.modes import find_modes

HIST_BINS = 40
CSV_COLUMNS = ("seed", "n", "beta", "trial", "mode_count", "in_tprime", "in_t_not_tprime", "outside_t")


@dataclass(frozen=True)
class SweepRecord:
    seed: int
    n: int
    beta: float
    trial: int
    mode_count: int
    in_tprime: int
    in_t_not_tprime: int
    outside_t: int

    def __post_init__(self):
        if self.in_tprime + self.in_t_not_tprime + self.outside_t != self.mode_count:
            raise InvalidInputError(f"region counts do not sum to mode_count in {self!r}")
        if self.mode_count < 1:
            raise InvalidInputError("a KDE always has at least one mode")


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    exponent: float
    r2: float
    points: int

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "exponent": self.exponent, "r2": self.r2}


def trial_seed(master_seed: int, beta_index: int, trial: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(beta_index), int(trial)))
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(n: int, beta: float, seed: int, trial: int = 0) -> tuple[SweepRecord, np.ndarray]:
    """One realization: its record and the locations of its modes."""
    report = find_modes(draw_samples(n, beta, seed))
    regions = report.counts_by_region
    if regions is None:
        regions = (0, 0, report.mode_count)
    rec = SweepRecord(int(seed), int(n), float(beta), int(trial), report.mode_count, *map(int, regions))
    return rec, report.maxima


def _trial_job(args):
    return run_trial(*args)


def _map(jobs: list, threads: int) -> list:
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(threads) as pool:
            return list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    return [_trial_job(j) for j in jobs]


def run_sweep(
    n: int, beta_grid: Sequence[float], trials: int, master_seed: int, threads: int = 1
) -> list[SweepRecord]:
    """Records for every (beta, trial) pair, in beta-major then trial order."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if any(not b > 0 for b in beta_grid):
        raise InvalidInputError("every beta must be positive")
    jobs = [
        (n, float(b), trial_seed(master_seed, i, k), k) for i, b in enumerate(beta_grid) for k in range(trials)
    ]
    return [rec for rec, _ in _map(jobs, threads)]


def geometric_grid(lo: float, hi: float, points: int) -> list[float]:
    return [float(b) for b in np.geomspace(lo, hi, points)]


def summarize(records: Iterable[SweepRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Distinct betas with the mean, standard error and trial count of the mode count."""
    by_beta: dict[float, list[int]] = {}
    for r in records:
        by_beta.setdefault(r.beta, []).append(r.mode_count)
    betas = np.array(sorted(by_beta))
    counts = [np.asarray(by_beta[b], dtype=float) for b in betas]
    means = np.array([c.mean() for c in counts])
    stderrs = np.array([c.std(ddof=1) / math.sqrt(c.size) if c.size > 1 else math.nan for c in counts])
    return betas, means, stderrs, np.array([c.size for c in counts])


def power_law_fit(records: Iterable[SweepRecord]) -> FitResult:
    """Least squares of log(mean mode count) on log(beta)."""
    betas, means, _, _ = summarize(records)
    if betas.size < 3:
        raise InsufficientDataError(f"need at least 3 distinct beta values, got {betas.size}")
    x, y = np.log(betas), np.log(means)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(math.exp(intercept)), float(slope), min(max(r2, 0.0), 1.0), int(betas.size))


def tail_bound(beta: float) -> float:
    """Expected count of samples outside ``T`` bounds the modes there: ``2 sqrt(beta e^omega)``."""
    return 2.0 * math.sqrt(beta * math.exp(omega(beta)))


def tail_check(records: Sequence[SweepRecord], n: int, beta: float, slack: float = 3.0) -> bool:
    sel = [r.outside_t for r in records if r.n == n and r.beta == beta]
    if not sel:
        raise InsufficientDataError(f"no records at n={n}, beta={beta}")
    return float(np.mean(sel)) <= slack * tail_bound(beta)


def region_means(records: Sequence[SweepRecord]) -> dict[str, float]:
    if not records:
        raise InsufficientDataError("no records")
    a = np.array([[r.in_tprime, r.in_t_not_tprime, r.outside_t, r.mode_count] for r in records], dtype=float)
    m = a.mean(axis=0)
    return {"in_tprime": m[0], "in_t_not_tprime": m[1], "outside_t": m[2], "mode_count": m[3]}


@dataclass(frozen=True)
class ModeHistogram:
    n: int
    beta: float
    trials: int
    edges: np.ndarray
    counts: np.ndarray
    kr: np.ndarray
    in_T: np.ndarray
    empirical_T: np.ndarray
    kr_T: np.ndarray
    locations: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def l1_T(self) -> float:
        width = np.diff(self.edges)[self.in_T]
        return float(np.sum(np.abs(self.empirical_T - self.kr_T) * width))

    def rows(self) -> list[tuple]:
        return [
            (float(c), int(k), float(d), bool(m))
            for c, k, d, m in zip(self.centers, self.counts, self.kr, self.in_T)
        ]


def collect_trials(
    n: int, beta: float, trials: int, master_seed: int, threads: int = 1
) -> tuple[list[SweepRecord], np.ndarray]:
    """Records of ``trials`` runs at one beta plus every mode location, pooled.

    Seeds match :func:`run_sweep` with a single-point grid.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    jobs = [(n, float(beta), trial_seed(master_seed, 0, k), k) for k in range(trials)]
    results = _map(jobs, threads)
    return [r for r, _ in results], np.concatenate([m for _, m in results])


def histogram_from_locations(locations: np.ndarray, n: int, beta: float, trials: int, bins: int) -> ModeHistogram:
    """Bin pooled mode locations over ``[-L, L]`` with ``L`` one unit past ``T``,
    next to the Gaussian-approximation Kac-Rice density at the bin centres.

    Both columns are normalized to unit mass over the bins whose centres lie in ``T``.
    """
    if bins < 20:
        raise InvalidInputError("bins must be >= 20")
    belts = intervals_T(n, beta)
    if belts.t_end is None:
        raise InvalidInputError(f"T is empty at n={n}, beta={beta}")
    L = belts.t_end + 1.0
    locs = np.asarray(locations, dtype=float)
    edges = np.linspace(-L, L, bins + 1)
    counts, _ = np.histogram(locs, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    kr = np.array([kr_density_at(c, beta, n) for c in centers])
    in_T = np.abs(centers) <= belts.t_end
    width = np.diff(edges)[in_T]
    inside = counts[in_T].sum()
    emp = counts[in_T] / (inside * width) if inside else np.zeros(int(in_T.sum()))
    krT = kr[in_T] / np.sum(kr[in_T] * width)
    return ModeHistogram(n, float(beta), trials, edges, counts, kr, in_T, emp, krT, locs)


def mode_histogram(
    n: int, beta: float, trials: int, bins: int, master_seed: int, threads: int = 1
) -> ModeHistogram:
    if bins < 20:
        raise InvalidInputError("bins must be >= 20")
    _, locs = collect_trials(n, beta, trials, master_seed, threads)
    return histogram_from_locations(locs, n, beta, trials, bins)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def records_to_csv(records: Iterable[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])
    return buf.getvalue()


def write_csv(records: Iterable[SweepRecord], path) -> None:
    _atomic_write(Path(path), records_to_csv(records))


def read_csv(path) -> list[SweepRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise InvalidInputError(f"unexpected CSV header {reader.fieldnames}")
        types = {f.name: f.type for f in fields(SweepRecord)}
        return [
            SweepRecord(**{k: (float(v) if types[k] in (float, "float") else int(v)) for k, v in row.items()})
            for row in reader
        ]


def sweep_summary(n: int, records: Sequence[SweepRecord], config: dict | None = None) -> dict:
    betas, means, stderrs, _ = summarize(records)
    fit = power_law_fit(records)
    out = {
        "n": n,
        "omega_rule": OMEGA_RULE,
        "fit": fit.to_dict(),
        "betas": betas.tolist(),
        "means": means.tolist(),
        "stderrs": [None if math.isnan(s) else s for s in stderrs],
    }
    if config is not None:
        out["config"] = config
    return out


def write_json(obj: dict, path) -> None:
    _atomic_write(Path(path), json.dumps(obj, indent=2, sort_keys=False) + "\n")


def resolved_constants() -> dict:
    return {"omega_rule": OMEGA_RULE, "window": WINDOW}
