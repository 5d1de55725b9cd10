#!/usr/bin/env python3
"""Emit the feedback-gain ratio curves (delta vs SNR) as CSV.

Runs the `ratio` subcommand with the fig2 preset: epsilon = 0.001, rates
{0.009, 0.05, 0.1}, SNR from -10 to 10 dB.  The CSV plots directly with
gnuplot or pandas.
"""

import argparse
import sys

from bafsim.cli import main as bafsim_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="ratio_vs_snr.csv")
    parser.add_argument("--format", default="csv", choices=("csv", "jsonl"))
    args = parser.parse_args()
    return bafsim_main(["ratio", "--preset", "fig2", "--out", args.out, "--format", args.format])


if __name__ == "__main__":
    sys.exit(main())
