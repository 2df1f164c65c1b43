"""Datasets: synthetic mixtures, IDX files, imbalance inducers and splits."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkit import Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    # row ids in the dataset this one was drawn from
    index: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features {self.features.shape} do not match {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range")
        if self.index is None:
            self.index = np.arange(len(self.labels))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, rows, relabel=None, num_classes=None) -> LabeledDataset:
        rows = np.asarray(rows, dtype=np.int64)
        labels = self.labels[rows]
        if relabel is not None:
            labels = np.asarray([relabel[int(y)] for y in labels], dtype=np.int64)
        return LabeledDataset(
            self.features[rows],
            labels,
            self.num_classes if num_classes is None else num_classes,
            self.index[rows],
        )

    def class_rows(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


def _as_rng(seed) -> Rng:
    return seed if isinstance(seed, Rng) else Rng(seed)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _draw(rows: np.ndarray, k: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniform draw of k rows without replacement: (chosen, rest), both sorted."""
    perm = rng.permutation(len(rows))
    return np.sort(rows[perm[:k]]), np.sort(rows[perm[k:]])


def _class_centers(num_classes: int, dim: int) -> np.ndarray:
    centers = np.zeros((num_classes, dim))
    if dim == 2:
        for c in range(num_classes):
            angle = 2.0 * math.pi * c / num_classes
            centers[c] = (math.cos(angle), math.sin(angle))
        return centers
    if num_classes > 2 * dim:
        raise ValueError(f"axis-aligned centers need num_classes <= 2 * dim, got {num_classes}")
    for c in range(num_classes):
        centers[c, c % dim] = 1.0 if c < dim else -1.0
    return centers


def make_gaussian_mixture(
    num_classes: int, samples_per_class, dim: int, class_separation: float, seed
) -> LabeledDataset:
    """Unit-covariance Gaussians centred at ``separation * u_c``.

    ``u_c`` are equally spaced on the unit circle when dim == 2, and signed
    axis vectors otherwise. ``samples_per_class`` is an int or a per-class list.
    """
    if class_separation < 0:
        raise ValueError("class_separation must be >= 0")
    counts = (
        [int(samples_per_class)] * num_classes
        if np.isscalar(samples_per_class)
        else [int(n) for n in samples_per_class]
    )
    if len(counts) != num_classes or min(counts) < 1 or dim < 1:
        raise ValueError("need dim >= 1 and at least one sample for every class")
    rng = _as_rng(seed)
    centers = class_separation * _class_centers(num_classes, dim)
    total = sum(counts)
    noise = rng.normals(total * dim).reshape(total, dim)
    labels = np.repeat(np.arange(num_classes), counts)
    return LabeledDataset(centers[labels] + noise, labels, num_classes)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw: bytes, path, expected_magic: int, ndim: int) -> tuple[int, ...]:
    if len(raw) < 4 + 4 * ndim:
        raise TruncatedFileError(f"{path}: truncated header")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise BadMagicError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    return struct.unpack_from(f">{ndim}I", raw, 4)


def read_idx(images_path, labels_path) -> LabeledDataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled by 1/255."""
    img_raw = _read_bytes(images_path)
    n_img, rows, cols = _idx_header(img_raw, images_path, IDX_IMAGES_MAGIC, 3)
    lab_raw = _read_bytes(labels_path)
    (n_lab,) = _idx_header(lab_raw, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise CountMismatchError(f"{n_img} images but {n_lab} labels")
    need = 16 + n_img * rows * cols
    if len(img_raw) < need:
        raise TruncatedFileError(f"{images_path}: expected {need} bytes, got {len(img_raw)}")
    if len(lab_raw) < 8 + n_lab:
        raise TruncatedFileError(f"{labels_path}: expected {8 + n_lab} bytes, got {len(lab_raw)}")
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=n_img * rows * cols, offset=16)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=n_lab, offset=8).astype(np.int64)
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    num_classes = int(labels.max()) + 1 if n_lab else 0
    return LabeledDataset(features, labels, max(num_classes, 1))


def write_idx(images: np.ndarray, labels, images_path, labels_path) -> None:
    """Write u8 images (N x rows x cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(
        struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


@dataclass(frozen=True)
class MajoritySpec:
    total: int = 5000
    majority_class: int = 9
    minority_class: int = 4
    ratio: float = 0.9

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must be in (0, 1)")
        n_major = round_half_up(self.ratio * self.total)
        if n_major < 1 or self.total - n_major < 1:
            raise ValueError("ratio * total leaves a class with no samples")

    @property
    def counts(self) -> tuple[int, int]:
        """(minority, majority) sample counts."""
        n_major = round_half_up(self.ratio * self.total)
        return self.total - n_major, n_major


def induce_majority_ratio(dataset: LabeledDataset, spec: MajoritySpec, seed) -> LabeledDataset:
    """Binary subset with ``round(ratio * total)`` majority samples.

    Labels are remapped to 0 = minority, 1 = majority; row order is shuffled.
    """
    rng = _as_rng(seed)
    n_minor, n_major = spec.counts
    chosen = []
    for cls, k in ((spec.minority_class, n_minor), (spec.majority_class, n_major)):
        rows = dataset.class_rows(cls)
        if len(rows) < k:
            raise InsufficientSamplesError(f"class {cls} has {len(rows)} samples, need {k}")
        chosen.append(_draw(rows, k, rng)[0])
    rows = np.concatenate(chosen)
    rows = rows[rng.permutation(len(rows))]
    relabel = {spec.minority_class: 0, spec.majority_class: 1}
    return dataset.subset(rows, relabel=relabel, num_classes=2)


@dataclass(frozen=True)
class LongTailSpec:
    mu: float | None = None
    imbalance_factor: float | None = None

    def __post_init__(self):
        if (self.mu is None) == (self.imbalance_factor is None):
            raise ValueError("give exactly one of mu or imbalance_factor")
        if self.mu is not None and not 0 < self.mu <= 1:
            raise ValueError("mu must be in (0, 1]")
        if self.imbalance_factor is not None and self.imbalance_factor < 1:
            raise ValueError("imbalance_factor must be >= 1")

    def resolve_mu(self, num_classes: int) -> float:
        if self.mu is not None:
            return self.mu
        if num_classes < 2:
            return 1.0
        return self.imbalance_factor ** (-1.0 / (num_classes - 1))


def long_tail_counts(base_counts, mu: float) -> list[int]:
    """``max(1, round_half_up(n_c * mu^c))`` for each 0-based class index c."""
    return [max(1, round_half_up(n * mu**c)) for c, n in enumerate(base_counts)]


def induce_long_tail(dataset: LabeledDataset, spec: LongTailSpec, seed) -> LabeledDataset:
    """Keep ``round(n_c * mu^c)`` (at least 1) samples of class c.

    ``n_c`` is the class's available count in ``dataset``.
    """
    rng = _as_rng(seed)
    mu = spec.resolve_mu(dataset.num_classes)
    base = dataset.class_counts
    targets = long_tail_counts(base, mu)
    kept = []
    for c, k in enumerate(targets):
        rows = dataset.class_rows(c)
        if base[c] == 0:
            continue
        if len(rows) < k:
            raise InsufficientSamplesError(f"class {c} has {len(rows)} samples, need {k}")
        kept.append(_draw(rows, k, rng)[0])
    return dataset.subset(np.sort(np.concatenate(kept)))


def split_validation(dataset: LabeledDataset, per_class, seed) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split; ``per_class`` is a count (int) or a fraction (float < 1).

    Returns ``(train, val)``; both keep the source's row order.
    """
    rng = _as_rng(seed)
    counts = dataset.class_counts
    val_rows, train_rows = [], []
    for c in range(dataset.num_classes):
        rows = dataset.class_rows(c)
        if isinstance(per_class, float) and 0 < per_class < 1:
            k = round_half_up(per_class * counts[c])
        else:
            k = int(per_class)
        if k == 0:
            train_rows.append(rows)
            continue
        if counts[c] <= k:
            raise InsufficientSamplesError(
                f"class {c} has {counts[c]} samples, cannot hold out {k} for validation"
            )
        chosen, rest = _draw(rows, k, rng)
        val_rows.append(chosen)
        train_rows.append(rest)
    val = np.sort(np.concatenate(val_rows)) if val_rows else np.zeros(0, dtype=np.int64)
    train = np.sort(np.concatenate(train_rows)) if train_rows else np.zeros(0, dtype=np.int64)
    return dataset.subset(train), dataset.subset(val)


def take_per_class(dataset: LabeledDataset, per_class: int, seed) -> LabeledDataset:
    """Exactly ``per_class`` rows of each class, drawn uniformly."""
    rng = _as_rng(seed)
    rows = []
    for c in range(dataset.num_classes):
        cls_rows = dataset.class_rows(c)
        if len(cls_rows) < per_class:
            raise InsufficientSamplesError(f"class {c} has {len(cls_rows)} samples, need {per_class}")
        rows.append(_draw(cls_rows, per_class, rng)[0])
    return dataset.subset(np.sort(np.concatenate(rows)))


def select_classes(dataset: LabeledDataset, classes) -> LabeledDataset:
    """Rows whose label is in ``classes``, relabelled to 0..len(classes)-1."""
    classes = [int(c) for c in classes]
    rows = np.flatnonzero(np.isin(dataset.labels, classes))
    return dataset.subset(rows, relabel={c: i for i, c in enumerate(classes)}, num_classes=len(classes))


def write_csv(dataset: LabeledDataset, path) -> None:
    """Header ``f0,...,f{D-1},label``; floats in round-trip ``repr`` form."""
    with open(path, "w") as f:
        f.write(",".join([f"f{j}" for j in range(dataset.dim)] + ["label"]) + "\n")
        for x, y in zip(dataset.features, dataset.labels):
            f.write(",".join([repr(float(v)) for v in x] + [str(int(y))]) + "\n")


def read_csv(path, num_classes: int | None = None) -> LabeledDataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    labels = data[:, -1].astype(np.int64)
    c = num_classes if num_classes is not None else int(labels.max()) + 1
    return LabeledDataset(data[:, :-1], labels, c)
