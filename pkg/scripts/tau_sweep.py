#!/usr/bin/env python3
"""Fixed focusing exponents against the dynamic one, at a single ratio.

    python scripts/tau_sweep.py configs/synthetic_binary.cfg --ratio 0.98
"""

import argparse
import os
from pathlib import Path

from cdbloss.metrics import mean_std
from cdbloss.runner import parse_config, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--ratio", default="0.98")
    ap.add_argument("--taus", default="0,0.5,1,2,5")
    ap.add_argument("--output-dir", default="runs/tau_sweep")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    config = parse_config(args.config).override("dataset.ratio", args.ratio).override("loss.kind", "cdb_ce")
    if config["dataset.source"] == "mnist_idx" and os.environ.get("CDB_MNIST_DIR"):
        config = config.override("dataset.mnist_dir", os.environ["CDB_MNIST_DIR"])
    points = [(f"tau={t}", config.override("loss.tau_mode", "fixed").override("loss.tau", t)) for t in args.taus.split(",")]
    points.append(("dynamic", config.override("loss.tau_mode", "dynamic")))

    out = Path(args.output_dir)
    lines = ["setting,error_mean,error_std"]
    for name, cfg in points:
        records, _ = run_experiment(cfg, out / name, threads=args.threads)
        mean, std = mean_std(r.summary.error_rate for r in records)
        lines.append(f"{name},{100 * mean:.2f},{100 * std:.2f}")
        print(f"{name:>10s}  {100 * mean:6.2f} ± {100 * std:.2f}")
    (out / "table.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
