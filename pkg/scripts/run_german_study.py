#!/usr/bin/env python3
"""Reproduce the West German reunification study on the vendored panel.

Fits all five estimators to per capita GDP for West Germany against 16
OECD donor countries (1960-2003, intervention at 1990), runs the placebo
permutation for the regression and synthetic control fits, and prints the
pre-fit diagnostics. Expects data/german_reunification.csv; see
scripts/fetch_german_data.py if it is missing.
"""

import argparse
import sys
import time
from pathlib import Path

from causalpanel import cim, did, hcw, inference, lfm, scm
from causalpanel.panel import load_csv

DATA = Path(__file__).resolve().parent.parent / "data" / "german_reunification.csv"


def timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - t0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", default=str(DATA), help="vendored panel CSV")
    parser.add_argument("--iters", type=int, default=10_000,
                        help="posterior draws per chain for the state-space fit")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    path = Path(args.data)
    if not path.exists():
        sys.exit(f"{path} is missing; run scripts/fetch_german_data.py on a "
                 "networked machine first")
    panel = load_csv(path, treated=["West Germany"], t1=1989)
    print(f"panel: {panel.n} countries, {panel.T} years, "
          f"{panel.T1} pre-intervention\n")

    fits = {
        "did": lambda: did.estimate_effects(did.fit_did(panel)),
        "hcw": lambda: hcw.estimate_effects(hcw.fit_hcw(panel)),
        "lfm": lambda: lfm.estimate_effects_xu(panel, J="auto",
                                               fe=("unit", "time")),
        "scm": lambda: scm.predict_counterfactual(scm.fit_weights(panel)),
        "cim": lambda: cim.estimate_effects(cim.fit_cim(
            panel, spec=cim.BstsSpec(iterations=args.iters, seed=args.seed))),
    }
    print(f"{'method':<8}{'avg effect':>12}{'avg reduction':>15}{'seconds':>10}")
    for name, fit in fits.items():
        est, secs = timed(fit)
        print(f"{name:<8}{est.mean_effect():>12.1f}"
              f"{est.mean_reduction():>15.1f}{secs:>10.2f}")

    print("\nplacebo permutation (post/pre MSE ratio):")
    placebo_fits = {
        "hcw": lambda p: hcw.estimate_effects(hcw.fit_hcw(p)),
        "scm": lambda p: scm.predict_counterfactual(scm.fit_weights(p)),
    }
    for name, fit in placebo_fits.items():
        result, secs = timed(lambda: inference.placebo_test(panel, fit))
        print(f"  {name}: r = {result.r_treated:.2f}, rank "
              f"{result.rank} of {result.n_tested}, "
              f"p = {result.p_value:.3f}  ({secs:.2f}s)")

    trend = did.parallel_trends_series(panel)
    hull = scm.convex_hull_check(panel)
    print("\ndiagnostics:")
    print(f"  pre-period gap trend: slope {trend.slope:.2f}/year "
          f"(p = {trend.p_value:.2g})")
    print(f"  treated inside donor hull: {hull.inside} "
          f"({len(hull.violations)} periods outside)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
