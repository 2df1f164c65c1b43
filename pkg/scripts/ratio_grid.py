#!/usr/bin/env python3
"""Error rate of every loss across majority-class ratios (binary protocol).

    python scripts/ratio_grid.py configs/synthetic_binary.cfg --output-dir runs/ratio_grid
    CDB_MNIST_DIR=/data/mnist python scripts/ratio_grid.py configs/mnist_binary.cfg

Writes one experiment directory per (ratio, loss) point and a table.csv with
``mean±std`` test error in percent; rows are ratios, columns losses.
"""

import argparse
import os

from cdbloss.runner import parse_config
from cdbloss.runner.report import sweep, write_table

RATIOS = "0.9,0.95,0.98,0.99,0.995"
LOSSES = "ce,ifw_ce,focal,class_balanced,cdb_ce"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--ratios", default=RATIOS)
    ap.add_argument("--losses", default=LOSSES)
    ap.add_argument("--output-dir", default="runs/ratio_grid")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    config = parse_config(args.config)
    if config["dataset.source"] == "mnist_idx" and os.environ.get("CDB_MNIST_DIR"):
        config = config.override("dataset.mnist_dir", os.environ["CDB_MNIST_DIR"])
    params = [("dataset.ratio", args.ratios.split(",")), ("loss.kind", args.losses.split(","))]
    results = sweep(config, params, args.output_dir, threads=args.threads)
    print(write_table(results, [k for k, _ in params], os.path.join(args.output_dir, "table.csv")), end="")


if __name__ == "__main__":
    main()
