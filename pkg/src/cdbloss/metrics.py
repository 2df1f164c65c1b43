"""Evaluation metrics.

Conventions: a class whose recall or precision has an empty denominator
contributes 0 and is still counted in the macro average. Top-k ties are
broken in favour of the lower class index.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class TrialSummary:
    top1: float
    topk: dict[int, float]
    macro_recall: float
    macro_precision: float
    per_class_accuracy: list[float]
    error_rate: float
    minority_recall: float | None = None
    majority_recall: float | None = None
    extra: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topk"] = {str(k): v for k, v in self.topk.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrialSummary:
        d = dict(d)
        d["topk"] = {int(k): v for k, v in d["topk"].items()}
        return cls(**d)

    def scalar_metrics(self) -> dict[str, float]:
        out = {
            "top1": self.top1,
            "error_rate": self.error_rate,
            "macro_recall": self.macro_recall,
            "macro_precision": self.macro_precision,
        }
        for k, v in sorted(self.topk.items()):
            out[f"top{k}"] = v
        if self.minority_recall is not None:
            out["minority_recall"] = self.minority_recall
        if self.majority_recall is not None:
            out["majority_recall"] = self.majority_recall
        out.update(self.extra)
        return out


def confusion_matrix(labels, predictions, num_classes: int) -> np.ndarray:
    """Counts indexed ``[true, predicted]``."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    flat = np.bincount(labels * num_classes + predictions, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes)


def topk_predictions(logits, k: int) -> np.ndarray:
    """Indices of the k largest logits per row, lower index first on ties."""
    z = np.asarray(logits, dtype=np.float64)
    # stable sort on -z keeps the lower index ahead among equal values
    return np.argsort(-z, axis=1, kind="stable")[:, :k]


def argmax_predictions(logits) -> np.ndarray:
    return topk_predictions(logits, 1)[:, 0]


def topk_accuracy(logits, labels, k: int) -> float:
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not 1 <= k <= z.shape[1]:
        raise ValueError(f"k={k} out of range [1, {z.shape[1]}]")
    if z.shape[0] == 0:
        return 0.0
    hits = (topk_predictions(z, k) == labels[:, None]).any(axis=1)
    return float(hits.mean())


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def per_class_recall(confusion) -> np.ndarray:
    cm = np.asarray(confusion, dtype=np.float64)
    return _safe_ratio(np.diag(cm), cm.sum(axis=1))


def per_class_precision(confusion) -> np.ndarray:
    cm = np.asarray(confusion, dtype=np.float64)
    return _safe_ratio(np.diag(cm), cm.sum(axis=0))


def _mean(values) -> float:
    # correctly rounded sum, so the result does not depend on summation order
    values = [float(v) for v in values]
    return math.fsum(values) / len(values)


def macro_recall(confusion) -> float:
    return _mean(per_class_recall(confusion))


def macro_precision(confusion) -> float:
    return _mean(per_class_precision(confusion))


def group_metrics(confusion, group) -> tuple[float, float]:
    """Macro recall and precision averaged over the classes in ``group`` only."""
    idx = sorted(set(int(g) for g in group))
    cm = np.asarray(confusion)
    if not idx:
        raise ValueError("empty group")
    if idx[0] < 0 or idx[-1] >= cm.shape[0]:
        raise ValueError("group index out of range")
    return _mean(per_class_recall(cm)[idx]), _mean(per_class_precision(cm)[idx])


def summarize(logits, labels, ks=(1,), minority_group=None, majority_group=None) -> TrialSummary:
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = z.shape[1]
    preds = argmax_predictions(z)
    cm = confusion_matrix(labels, preds, num_classes)
    top1 = topk_accuracy(z, labels, 1)
    topk = {k: topk_accuracy(z, labels, k) for k in ks if k <= num_classes}
    summary = TrialSummary(
        top1=top1,
        topk=topk,
        macro_recall=macro_recall(cm),
        macro_precision=macro_precision(cm),
        per_class_accuracy=per_class_recall(cm).tolist(),
        error_rate=1.0 - top1,
    )
    if minority_group:
        summary.minority_recall = group_metrics(cm, minority_group)[0]
    if majority_group:
        summary.majority_recall = group_metrics(cm, majority_group)[0]
    return summary


def mean_std(values) -> tuple[float, float]:
    """Mean and Bessel-corrected standard deviation (0 for a single value)."""
    v = [float(x) for x in values]
    if not v:
        raise ValueError("no values to aggregate")
    if all(x == v[0] for x in v):
        return v[0], 0.0
    mean = math.fsum(v) / len(v)
    var = math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1)
    return mean, math.sqrt(var)


def aggregate_trials(summaries) -> dict[str, tuple[float, float]]:
    """Per-metric ``(mean, sample std)`` across trials."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("no trials to aggregate")
    keys = summaries[0].scalar_metrics().keys()
    return {k: mean_std(s.scalar_metrics()[k] for s in summaries) for k in keys}
