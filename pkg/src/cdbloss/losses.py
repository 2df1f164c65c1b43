"""Training criteria and their gradients with respect to logits.

Every loss returns a :class:`BatchLossResult` whose ``dloss_dlogits`` is the
gradient of ``mean_loss`` (the arithmetic mean of per-sample losses).

``focal_loss``, ``inverse_frequency_weights`` and ``class_balanced_weights``
are the usual external baselines (Lin et al. focal loss; Cui et al.
effective-number weighting), included for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import log_softmax

LOSS_KINDS = ("ce", "cdb_ce", "ifw_ce", "focal", "class_balanced")
TAU_MODES = ("fixed", "dynamic")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "ce"
    tau_mode: str = "dynamic"
    tau: float = 1.0
    focal_gamma: float = 2.0
    cb_beta: float = 0.999

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.tau_mode not in TAU_MODES:
            raise ValueError(f"unknown tau mode {self.tau_mode!r}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0 <= self.cb_beta < 1:
            raise ValueError("cb_beta must be in [0, 1)")

    @property
    def class_weights_source(self) -> str:
        return {
            "cdb_ce": "difficulty",
            "ifw_ce": "inverse_frequency",
            "class_balanced": "effective_number",
        }.get(self.kind, "none")


@dataclass
class BatchLossResult:
    mean_loss: float
    dloss_dlogits: np.ndarray
    per_sample_loss: np.ndarray


def _check_labels(logits: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be B x C, got shape {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ValueError(f"{labels.shape[0]} labels for {logits.shape[0]} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("label out of range")
    return labels


def _result(per_sample: np.ndarray, grad: np.ndarray) -> BatchLossResult:
    mean = float(per_sample.mean()) if per_sample.size else 0.0
    return BatchLossResult(mean, grad, per_sample)


def _weighted_ce(logits, labels, class_weights=None) -> BatchLossResult:
    z = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(z, labels)
    n, c = z.shape
    logp = log_softmax(z) if n else np.zeros((0, c))
    rows = np.arange(n)
    per_sample = -logp[rows, labels]
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    if class_weights is not None:
        w = np.asarray(class_weights, dtype=np.float64)[labels]
        per_sample = w * per_sample
        grad *= w[:, None]
    if n:
        grad /= n
    return _result(per_sample, grad)


def ce_loss(logits, labels) -> BatchLossResult:
    """Softmax cross-entropy: ``-log p_k`` per sample."""
    return _weighted_ce(logits, labels)


def cdb_ce_loss(logits, labels, class_weights) -> BatchLossResult:
    """Cross-entropy with each sample scaled by its class's weight ``w_k``.

    With unit weights this is bit-for-bit identical to :func:`ce_loss`.
    """
    z = np.asarray(logits, dtype=np.float64)
    w = np.asarray(class_weights, dtype=np.float64)
    if w.shape != (z.shape[1],):
        raise ValueError(f"expected {z.shape[1]} class weights, got {w.shape[0] if w.ndim else w}")
    if np.any(w < 0):
        raise ValueError("class weights must be >= 0")
    return _weighted_ce(z, labels, w)


# static-weight baselines share the same weighted form
weighted_ce_loss = cdb_ce_loss


def focal_loss(logits, labels, gamma: float) -> BatchLossResult:
    """Focal loss ``-(1 - p_k)^gamma * log p_k``.

    d/dz_j = (onehot_j - p_j) * (1 - p_k)^(gamma - 1) * (gamma * p_k * log p_k - (1 - p_k))
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    z = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(z, labels)
    n, c = z.shape
    if n == 0:
        return _result(np.zeros(0), np.zeros((0, c)))
    logp = log_softmax(z)
    p = np.exp(logp)
    rows = np.arange(n)
    logpk = logp[rows, labels]
    pk = p[rows, labels]
    one_minus = -np.expm1(logpk)
    modulator = one_minus**gamma
    per_sample = -modulator * logpk
    if gamma == 0:
        factor = -np.ones(n)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = one_minus ** (gamma - 1.0) * (gamma * pk * logpk - one_minus)
        factor = np.where(one_minus > 0, factor, 0.0)
    onehot_minus_p = -p
    onehot_minus_p[rows, labels] += 1.0
    grad = onehot_minus_p * factor[:, None] / n
    return _result(per_sample, grad)


def _counts(class_counts) -> np.ndarray:
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("class_counts must be a non-empty vector")
    if np.any(counts < 1):
        raise ValueError("empty class")
    return counts


def inverse_frequency_weights(class_counts) -> np.ndarray:
    """``w_c`` proportional to ``1 / n_c``, scaled to mean 1."""
    inv = 1.0 / _counts(class_counts)
    return inv / inv.mean()


def class_balanced_weights(class_counts, beta: float) -> np.ndarray:
    """Effective-number weights ``(1 - beta) / (1 - beta^n_c)``, scaled to sum C."""
    if not 0 <= beta < 1:
        raise ValueError("beta must be in [0, 1)")
    counts = _counts(class_counts)
    raw = (1.0 - beta) / (1.0 - np.power(beta, counts))
    return raw / raw.sum() * counts.size


def static_class_weights(spec: LossSpec, class_counts) -> np.ndarray | None:
    """Fixed per-class weights for the baselines, ``None`` when not applicable."""
    if spec.kind == "ifw_ce":
        return inverse_frequency_weights(class_counts)
    if spec.kind == "class_balanced":
        return class_balanced_weights(class_counts, spec.cb_beta)
    return None


def compute_loss(spec: LossSpec, logits, labels, class_weights=None) -> BatchLossResult:
    """Dispatch on ``spec.kind``. ``class_weights`` is required for weighted kinds."""
    if spec.kind == "ce":
        return ce_loss(logits, labels)
    if spec.kind == "focal":
        return focal_loss(logits, labels, spec.focal_gamma)
    if class_weights is None:
        raise ValueError(f"loss kind {spec.kind!r} needs class weights")
    return cdb_ce_loss(logits, labels, class_weights)
