"""Class-wise difficulty weighting.

Once per epoch, per-class validation accuracy ``A_c`` becomes a difficulty
``d_c = 1 - A_c`` and a weight ``w_c = d_c ** tau``. With a dynamic focusing
exponent, ``tau = 2 / (1 + exp(-b))`` where the bias
``b = max(A) / (min(A) + eps) - 1`` grows as the classifier favours some
classes over others.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .losses import LossSpec

EPSILON = 1e-4
EXP_CLAMP = 700.0
TAU_MAX = math.nextafter(2.0, 0.0)


@dataclass(frozen=True)
class ClassValStats:
    total: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        if self.total.shape != self.correct.shape or self.total.ndim != 1:
            raise ValueError("total and correct must be equal-length vectors")
        if np.any(self.correct < 0) or np.any(self.correct > self.total):
            raise ValueError("need 0 <= correct <= total for every class")

    @property
    def num_classes(self) -> int:
        return self.total.size

    @property
    def accuracy(self) -> np.ndarray:
        """``correct / total``; a class with no validation samples has accuracy 0."""
        acc = np.zeros(self.total.size)
        seen = self.total > 0
        acc[seen] = self.correct[seen] / self.total[seen]
        return acc

    @classmethod
    def from_accuracies(cls, accuracies, total: int = 10**6) -> ClassValStats:
        """Build stats realising the given accuracies (rounded to 1/total)."""
        acc = np.asarray(accuracies, dtype=np.float64)
        tot = np.full(acc.size, total, dtype=np.int64)
        return cls(tot, np.rint(acc * total).astype(np.int64))


@dataclass(frozen=True)
class DifficultyState:
    epoch: int
    accuracy: np.ndarray
    difficulty: np.ndarray
    tau: float
    bias: float
    weights: np.ndarray
    epsilon: float = EPSILON

    @classmethod
    def initial(cls, num_classes: int) -> DifficultyState:
        """Weights before any validation pass: all ones (plain cross-entropy)."""
        return cls(
            epoch=0,
            accuracy=np.full(num_classes, np.nan),
            difficulty=np.full(num_classes, np.nan),
            tau=float("nan"),
            bias=float("nan"),
            weights=np.ones(num_classes),
        )


def class_accuracies(predictions, labels, num_classes: int) -> ClassValStats:
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape:
        raise ValueError(f"{pred.size} predictions for {lab.size} labels")
    for name, v in (("prediction", pred), ("label", lab)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ValueError(f"{name} index out of range [0, {num_classes})")
    total = np.bincount(lab, minlength=num_classes)
    correct = np.bincount(lab[pred == lab], minlength=num_classes)
    return ClassValStats(total, correct)


def difficulties(stats: ClassValStats) -> np.ndarray:
    return 1.0 - stats.accuracy


def bias(stats: ClassValStats, epsilon: float = EPSILON) -> float:
    acc = stats.accuracy
    return float(acc.max() / (acc.min() + epsilon) - 1.0)


def dynamic_tau(b: float) -> float:
    """``2 / (1 + exp(-b))`` with the exponent clamped to +-700.

    For b above ~37 the quotient rounds to 2.0 in float64; the result is capped
    at the largest double below 2 so the open upper bound holds.
    """
    tau = 2.0 / (1.0 + math.exp(min(max(-b, -EXP_CLAMP), EXP_CLAMP)))
    return min(tau, TAU_MAX)


def weights(difficulty, tau: float) -> np.ndarray:
    """``d ** tau`` elementwise, with ``0 ** 0 == 1``."""
    d = np.asarray(difficulty, dtype=np.float64)
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau == 0:
        return np.ones_like(d)
    return np.power(d, tau)


def update(
    stats: ClassValStats, spec: LossSpec, epoch: int, epsilon: float = EPSILON
) -> DifficultyState:
    """One epoch's weight refresh from a single validation pass."""
    if np.any(stats.total == 0):
        missing = np.flatnonzero(stats.total == 0).tolist()
        warnings.warn(
            f"classes {missing} have no validation samples; treated as accuracy 0",
            RuntimeWarning,
            stacklevel=2,
        )
    d = difficulties(stats)
    b = bias(stats, epsilon)
    tau = dynamic_tau(b) if spec.tau_mode == "dynamic" else float(spec.tau)
    return DifficultyState(
        epoch=epoch,
        accuracy=stats.accuracy,
        difficulty=d,
        tau=tau,
        bias=b,
        weights=weights(d, tau),
        epsilon=epsilon,
    )
