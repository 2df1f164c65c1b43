#!/usr/bin/env python3
"""Minority-class recall of CE against CDB-CE on a long-tailed mixture, per seed.

    python scripts/long_tail_recall.py configs/synthetic_long_tail.cfg

Prints one row per seed and a one-sided sign test over the seeds (ties dropped).
"""

import argparse
import math

import numpy as np

from cdbloss.runner import parse_config, run_trial


def sign_test(wins: int, losses: int) -> float:
    n = wins + losses
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2**n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--baseline", default="ce", help="loss kind to compare against")
    args = ap.parse_args()

    config = parse_config(args.config)
    base_cfg = config.override("loss.kind", args.baseline)
    cdb_cfg = config.override("loss.kind", "cdb_ce")
    print("seed  baseline  cdb_ce   top1(base)  top1(cdb)")
    diffs = []
    for seed in config["seeds"]:
        base, cdb = run_trial(base_cfg, seed).summary, run_trial(cdb_cfg, seed).summary
        diffs.append(cdb.minority_recall - base.minority_recall)
        print(f"{seed:>4}  {base.minority_recall:8.4f}  {cdb.minority_recall:6.4f}   "
              f"{base.top1:9.4f}  {cdb.top1:9.4f}")
    wins, losses = sum(d > 0 for d in diffs), sum(d < 0 for d in diffs)
    print(f"mean gain {np.mean(diffs):+.4f}; {wins} wins, {losses} losses; "
          f"sign test p = {sign_test(wins, losses):.3g}")


if __name__ == "__main__":
    main()
