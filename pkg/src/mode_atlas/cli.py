"""Command-line entry point.

Every option can come from a TOML file (``--config``), either at top level or
under a table named after the subcommand; flags given on the command line win.
Exit status is 0 on success, 2 on invalid input and 3 when an output path
cannot be written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from mode_atlas import attention, edgeworth, experiments, kacrice
from mode_atlas.errors import ModeAtlasError
from mode_atlas.gkde import draw_samples
from mode_atlas.modes import find_modes

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_INVALID = 2
EXIT_UNWRITABLE = 3

DEFAULTS = {
    "count": {},
    "sweep": {"beta_min": 50.0, "beta_max": 1000.0, "points": 12, "trials": 200, "betas": None},
    "kacrice": {"t_min": -6.0, "t_max": 6.0, "points": 241, "out": None},
    "edgeworth": {"trials": 100_000, "out": None},
    "attention": {"dt": attention.FIG2_DT, "steps": None, "tau": attention.FIG2_TAU, "gap_fraction": 0.25},
    "fit": {"json": None},
}
REQUIRED = {
    "count": ("n", "beta", "seed"),
    "sweep": ("n", "seed", "csv", "json"),
    "kacrice": ("n", "beta"),
    "edgeworth": ("n", "beta", "t", "seed"),
    "attention": ("n", "beta", "seed", "csv", "json"),
    "fit": ("csv",),
}


class UsageError(Exception):
    pass


class UnwritableError(Exception):
    pass


def _default_threads() -> int:
    raw = os.environ.get("MODE_ATLAS_THREADS", "1")
    try:
        v = int(raw)
    except ValueError:
        raise UsageError(f"MODE_ATLAS_THREADS must be an integer, got {raw!r}") from None
    if v < 1:
        raise UsageError("MODE_ATLAS_THREADS must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mode-atlas", description="Modes of Gaussian kernel density estimates.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="TOML file with option values")
        sp.add_argument("--threads", type=int, help="worker cap (default: $MODE_ATLAS_THREADS or 1)")

    sp = sub.add_parser("count", help="modes of one sampled KDE, as JSON on stdout")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("sweep", help="mode counts over a geometric beta grid")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta-min", type=float)
    sp.add_argument("--beta-max", type=float)
    sp.add_argument("--points", type=int)
    sp.add_argument("--betas", type=lambda s: [float(b) for b in s.split(",")], help="explicit comma list")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--csv", type=Path)
    sp.add_argument("--json", type=Path)

    sp = sub.add_parser("kacrice", help="Kac-Rice mode density on a grid, as CSV")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--t-min", type=float)
    sp.add_argument("--t-max", type=float)
    sp.add_argument("--points", type=int)
    sp.add_argument("--out", type=Path, help="CSV path (default: stdout)")

    sp = sub.add_parser("edgeworth", help="normal vs Edgeworth fit of the standardized field")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--t", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", type=Path, help="JSON path (default: stdout)")

    sp = sub.add_parser("attention", help="attention particles on the circle and their clusters")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--steps", type=int, help="overrides --tau")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--gap-fraction", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--csv", type=Path)
    sp.add_argument("--json", type=Path)

    sp = sub.add_parser("fit", help="power-law fit of a sweep CSV")
    common(sp)
    sp.add_argument("--csv", type=Path)
    sp.add_argument("--json", type=Path, help="JSON path (default: stdout)")
    return p


def resolve(args: argparse.Namespace) -> dict:
    cmd = args.command
    conf = dict(DEFAULTS[cmd])
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
        conf.update({k.replace("-", "_"): v for k, v in top.items()})
        conf.update({k.replace("-", "_"): v for k, v in raw.get(cmd, {}).items()})
    for k, v in vars(args).items():
        if k not in ("command", "config") and v is not None:
            conf[k] = v
    if conf.get("threads") is None:
        conf["threads"] = _default_threads()
    missing = [k for k in REQUIRED[cmd] if conf.get(k) is None]
    if missing:
        raise UsageError(f"{cmd}: missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if conf["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    for k in ("csv", "json", "out"):
        if conf.get(k) is not None:
            conf[k] = str(conf[k])
    conf["command"] = cmd
    conf.update(experiments.resolved_constants())
    return conf


def _check_writable(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        parent = Path(p).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise UnwritableError(f"cannot write to {p}")
        if Path(p).is_dir():
            raise UnwritableError(f"{p} is a directory")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, path, out) -> None:
    if path is None:
        out.write(text)
    else:
        try:
            experiments._atomic_write(Path(path), text)
        except OSError as exc:
            raise UnwritableError(f"cannot write {path}: {exc}") from None


def _config_sidecar(path) -> str:
    return str(path) + ".config.json"


def cmd_count(conf: dict, out) -> None:
    report = find_modes(draw_samples(conf["n"], conf["beta"], conf["seed"]))
    out.write(_dump({"config": conf, **report.to_dict()}))


def sweep_betas(conf: dict) -> list[float]:
    if conf.get("betas"):
        return [float(b) for b in conf["betas"]]
    if conf["points"] < 1:
        raise UsageError("--points must be >= 1")
    return experiments.geometric_grid(conf["beta_min"], conf["beta_max"], conf["points"])


def cmd_sweep(conf: dict, out) -> None:
    _check_writable(conf["csv"], conf["json"], _config_sidecar(conf["csv"]))
    betas = sweep_betas(conf)
    conf["betas"] = betas
    records = experiments.run_sweep(conf["n"], betas, conf["trials"], conf["seed"], conf["threads"])
    # the fit needs three distinct betas; smaller sweeps still get their means
    try:
        summary = experiments.sweep_summary(conf["n"], records, conf)
    except experiments.InsufficientDataError:
        b, m, se, _ = experiments.summarize(records)
        summary = {
            "n": conf["n"],
            "omega_rule": kacrice.OMEGA_RULE,
            "fit": None,
            "betas": b.tolist(),
            "means": m.tolist(),
            "stderrs": [None if math.isnan(x) else x for x in se],
            "config": conf,
        }
    _emit(experiments.records_to_csv(records), conf["csv"], out)
    _emit(_dump(conf), _config_sidecar(conf["csv"]), out)
    _emit(_dump(summary), conf["json"], out)


def kacrice_rows(n: int, beta: float, t_min: float, t_max: float, points: int) -> list[tuple]:
    if not t_min < t_max:
        raise UsageError("--t-min must be below --t-max")
    if points < 2:
        raise UsageError("--points must be >= 2")
    rows = []
    for t in np.linspace(t_min, t_max, points):
        t = float(t)
        A = kacrice.belt_params(t, beta, n).A
        rows.append((t, kacrice.kr_density_at(t, beta, n), A, math.sqrt(beta) * math.exp(-A)))
    return rows


def cmd_kacrice(conf: dict, out) -> None:
    if conf["out"] is not None:
        _check_writable(conf["out"], _config_sidecar(conf["out"]))
    rows = kacrice_rows(conf["n"], conf["beta"], conf["t_min"], conf["t_max"], conf["points"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("t", "kr_density", "A_t", "sqrt_beta_exp_neg_A"))
    w.writerows([tuple(repr(v) for v in r) for r in rows])
    _emit(buf.getvalue(), conf["out"], out)
    if conf["out"] is not None:
        _emit(_dump(conf), _config_sidecar(conf["out"]), out)


def cmd_edgeworth(conf: dict, out) -> None:
    _check_writable(conf["out"])
    rec = edgeworth.validity_diagnostic(
        conf["n"], conf["beta"], conf["t"], conf["trials"], conf["seed"], conf["threads"]
    )
    _emit(_dump({"config": conf, **rec.to_dict()}), conf["out"], out)


def cmd_attention(conf: dict, out) -> None:
    _check_writable(conf["csv"], conf["json"], _config_sidecar(conf["csv"]))
    dt = conf["dt"]
    steps = conf["steps"] if conf["steps"] is not None else int(round(conf["tau"] / dt))
    conf["steps"] = steps
    start = attention.uniform_state(conf["n"], conf["beta"], conf["seed"])
    final = attention.integrate(start, dt, steps)
    report = attention.count_clusters(final, conf["gap_fraction"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("index", "angle"))
    w.writerows((i, repr(float(a))) for i, a in enumerate(final.angles))
    _emit(buf.getvalue(), conf["csv"], out)
    _emit(_dump(conf), _config_sidecar(conf["csv"]), out)
    _emit(_dump({"config": conf, "time": final.time, **report.to_dict()}), conf["json"], out)


def cmd_fit(conf: dict, out) -> None:
    _check_writable(conf["json"])
    try:
        records = experiments.read_csv(conf["csv"])
    except OSError as exc:
        raise UsageError(f"cannot read {conf['csv']}: {exc}") from None
    fit = experiments.power_law_fit(records)
    _emit(_dump({"config": conf, "fit": fit.to_dict(), "points": fit.points}), conf["json"], out)


COMMANDS = {
    "count": cmd_count,
    "sweep": cmd_sweep,
    "kacrice": cmd_kacrice,
    "edgeworth": cmd_edgeworth,
    "attention": cmd_attention,
    "fit": cmd_fit,
}


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        conf = resolve(args)
        COMMANDS[args.command](conf, out)
    except UnwritableError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_UNWRITABLE
    except (UsageError, ModeAtlasError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    return 0


if __name__ == "__main__":
    sys.exit(main())
