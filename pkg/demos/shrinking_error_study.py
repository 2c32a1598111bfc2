"""Monte Carlo check that estimation error shrinks like 1/sqrt(n).

Fits the same scenario at increasing cohort sizes and compares RMSE
ratios between consecutive sizes to the 0.5 a root-n method predicts
when the size quadruples.  Takes a minute or two at the defaults;
lower --reps for a faster, noisier look.
"""

import argparse
import sys

from effage import mc


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="power-count")
    parser.add_argument("--reps", type=int, default=120)
    parser.add_argument("--seed", type=int, default=5)
    args = parser.parse_args(argv)

    report = mc.consistency_study(scenario=args.scenario,
                                  sizes=(50, 200, 800),
                                  reps=args.reps, seed=args.seed)

    print(f"scenario {args.scenario}, {args.reps} replications per size")
    print(f"{'check':<32} {'observed':>10} {'bound':>8}")
    for check in report.checks:
        print(f"{check.name:<32} {check.observed:>10.3f} {check.bound:>8.3f}")

    print("\nverdict:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
