"""Print the PBM / HMM / GM comparison on the benchmark scenario.

    python3 scripts/discovery_table.py [--trials 500] [--config configs/benchmark.toml]
"""

import argparse
import os
import time

from cloudmanet.config import load_config
from cloudmanet.discovery import Strategy, compute_metrics
from cloudmanet.engine import benchmark_discovery

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "benchmark.toml"))
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    t0 = time.perf_counter()
    results = benchmark_discovery(cfg, args.trials)
    print(f"{'strategy':<8} {'path len':>9} {'stretch':>8} {'success':>8}")
    for s in Strategy:
        m = compute_metrics(results[s])
        length = "-" if m.avg_path_length is None else f"{m.avg_path_length:.2f}"
        stretch = "-" if m.avg_stretch is None else f"{m.avg_stretch:.4f}"
        print(f"{s.name:<8} {length:>9} {stretch:>8} {m.success_rate * 100:>7.1f}%")
    print(f"({args.trials} trials, seed {cfg.seed}, {time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
