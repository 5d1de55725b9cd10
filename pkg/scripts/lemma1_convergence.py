#!/usr/bin/env python3
"""Small-threshold ratio convergence: Pr(U + VW/(V+W+x) < g)/g^2 along g -> 0."""

import argparse
import sys

from bafsim.cli import main as bafsim_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--g-list", default="0.1,0.05,0.02,0.01")
    parser.add_argument("--x-factor", default="0.1", help="x = factor*g, or 'policy'")
    parser.add_argument("--trials", default="10000000")
    parser.add_argument("--seed", default="1234")
    parser.add_argument("--pathloss", default="0", help="0 gives unit variances")
    parser.add_argument("--out", default="lemma1_ratio.csv")
    args = parser.parse_args()
    return bafsim_main([
        "lemma1",
        "--g-list", args.g_list,
        "--x-factor", args.x_factor,
        "--trials", args.trials,
        "--seed", args.seed,
        "--pathloss", args.pathloss,
        "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
