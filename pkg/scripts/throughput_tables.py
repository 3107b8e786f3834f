"""Emit the three throughput tables and print them side by side.

    python3 scripts/throughput_tables.py [--out-dir out/tables] [--jobs N]
"""

import argparse
import csv
import os
import sys

import numpy as np

from cloudmanet.cli import execute

HERE = os.path.dirname(os.path.abspath(__file__))
SPEEDS = (10, 20, 50)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "tables.toml"))
    ap.add_argument("--out-dir", default="out/tables")
    ap.add_argument("--jobs", default=None)
    args = ap.parse_args()

    argv = ["emit-tables", "--config", args.config, "--speeds", ",".join(map(str, SPEEDS)), "--out-dir", args.out_dir]
    if args.jobs:
        argv += ["--jobs", args.jobs]
    code = execute(argv)
    if code:
        sys.exit(code)
    for speed in SPEEDS:
        with open(os.path.join(args.out_dir, f"throughput_{speed}mps.csv"), newline="") as fh:
            rows = list(csv.reader(fh))
        print(f"\n{speed} m/s (Mbit/s per unit load)")
        print("  ".join(f"{h:>8}" for h in rows[0]) + "        cv")
        for r in rows[1:]:
            vals = np.array([float(x) for x in r[1:]])
            print("  ".join(f"{x:>8}" for x in r) + f"  {vals.std() / vals.mean():8.3f}")


if __name__ == "__main__":
    main()
