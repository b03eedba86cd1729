"""Calibration run for the frozen constants in tests/test_acceptance.py.

Uses its own master seed so the acceptance runs are out-of-sample.
"""

import json
import math
import sys

from mode_atlas import experiments as ex

SEED = 777


def main(trials: int = 200) -> dict:
    recs = ex.run_sweep(10**4, ex.geometric_grid(50, 1000, 12), trials, SEED)
    betas, means, _, _ = ex.summarize(recs)
    ratios = [m / math.sqrt(b * math.log(b)) for b, m in zip(betas, means)]
    belt = ex.run_sweep(10**5, [300.0], trials, SEED)
    rm = ex.region_means(belt)
    out = {
        "ratio_min": min(ratios),
        "ratio_max": max(ratios),
        "tprime_per_sqrt_beta": rm["in_tprime"] / math.sqrt(300.0),
        "region_means": rm,
        "sweep_means": dict(zip(betas.tolist(), means.tolist())),
    }
    print(json.dumps(out, indent=2))
    return out


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
