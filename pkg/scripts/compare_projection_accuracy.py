"""EWA vs UT covariance error across incidence-angle bins, for several Gaussian shapes.

    python3 scripts/compare_projection_accuracy.py --trials 100 --mc-samples 100000
"""

import argparse
import time

import numpy as np

from fisheye_splat import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fov", type=float, default=200.0)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--mc-samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--shapes", nargs="+", default=list(experiments.SHAPES), choices=experiments.SHAPES)
    args = ap.parse_args()

    print(f"{'shape':<10} {'theta bin':>11} {'EWA err':>9} {'UT err':>9} {'UT wins':>8}")
    for shape in args.shapes:
        t0 = time.perf_counter()
        res = experiments.compare_projections(args.fov, args.trials, args.seed,
                                              mc_samples=args.mc_samples, shape=shape)
        for (lo, hi), trials in res.items():
            e = np.mean([t.ewa_error for t in trials])
            u = np.mean([t.ut_error for t in trials])
            wins = sum(t.ut_wins for t in trials)
            print(f"{shape:<10} {f'{lo:g}-{hi:g}':>11} {e:9.4f} {u:9.4f} {wins:>4}/{len(trials)}")
        print(f"{'':<10} ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
