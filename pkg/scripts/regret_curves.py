"""Median cumulative regret at checkpoints and the log-log slope between them.

    python3 scripts/regret_curves.py scripts/configs/linear_realizable.yaml
"""
from __future__ import annotations

import argparse

import numpy as np

from lbmrl.config import load_config
from lbmrl.runner import run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default=None)
    ap.add_argument("--seeds", default=None, help="comma-separated, overrides run.seeds")
    args = ap.parse_args()
    cfg = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    results = run_experiment(cfg, out=args.out, seeds=seeds)
    K = cfg.run.K
    checkpoints = cfg.run.checkpoints or [K // 8, K // 4, K // 2, K]
    checkpoints = [k for k in checkpoints if k >= 1]
    med = [float(np.median([r.regret_at(k) for r in results.values()])) for k in checkpoints]
    print(f"{'K':>8} {'median regret':>14} {'per episode':>12}")
    for k, m in zip(checkpoints, med):
        print(f"{k:>8} {m:>14.3f} {m / k:>12.5f}")
    if len(checkpoints) > 1 and min(med) > 0:
        slope = np.polyfit(np.log(checkpoints), np.log(med), 1)[0]
        print(f"log-log slope: {slope:.3f}")


if __name__ == "__main__":
    main()
