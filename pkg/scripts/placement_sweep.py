#!/usr/bin/env python3
"""Relay-placement sweep: analytic and Monte Carlo argmax per path-loss exponent."""

import argparse
import sys

from bafsim.cli import main as bafsim_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pathloss", nargs="+", type=float, default=[3.0, 4.0, 5.0])
    parser.add_argument("--snr-db", default="-20")
    parser.add_argument("--epsilon", default="0.3")
    parser.add_argument("--trials", default="1600000")
    parser.add_argument("--grid", default="201")
    parser.add_argument("--seed", default="1234")
    parser.add_argument("--out-prefix", default="placement")
    args = parser.parse_args()
    for alpha in args.pathloss:
        out = f"{args.out_prefix}_a{alpha:g}.csv"
        code = bafsim_main([
            "placement",
            f"--snr-db={args.snr_db}",
            "--epsilon", args.epsilon,
            "--trials", args.trials,
            "--grid", args.grid,
            "--seed", args.seed,
            "--pathloss", str(alpha),
            "--out", out,
        ])
        if code != 0:
            return code
        print(f"pathloss {alpha:g} -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
