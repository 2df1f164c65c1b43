#!/usr/bin/env python3
"""Recompute bias, dynamic tau and weights for A = [0.9, 0.5] in 50-digit arithmetic.

Standalone: uses mpmath only, never imports cdbloss, so it can serve as an
independent check on the float64 implementation.

    python scripts/derive_worked_example.py
"""

import json
import sys

from mpmath import mp, mpf

mp.dps = 50
EPS = mpf("0.0001")


def derive(accuracies, eps=EPS):
    acc = [mpf(a) for a in accuracies]
    bias = max(acc) / (min(acc) + eps) - 1
    tau = 2 / (1 + mp.exp(-bias))
    weights = [(1 - a) ** tau for a in acc]
    return {"bias": bias, "tau": tau, "weights": weights}


def main(argv):
    acc = [a for a in argv[1:]] or ["0.9", "0.5"]
    out = derive(acc)
    print(json.dumps({"accuracies": acc, "bias": float(out["bias"]), "tau": float(out["tau"]),
                      "weights": [float(w) for w in out["weights"]]}, indent=2))


if __name__ == "__main__":
    main(sys.argv)
