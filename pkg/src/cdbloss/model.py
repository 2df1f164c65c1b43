"""Multilayer perceptron with hand-written backprop and momentum SGD."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkit import Rng

CHECKPOINT_MAGIC = b"CDBM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (256,)
    num_classes: int = 2
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims entries must be >= 1")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.num_classes]


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_decay_factor: float = 0.1
    lr_decay_epochs: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be in (0, 1]")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch: decayed once per milestone reached."""
        lr = self.lr
        for milestone in self.lr_decay_epochs:
            if epoch >= milestone:
                lr *= self.lr_decay_factor
        return lr


@dataclass
class Mlp:
    """Weights are stored ``fan_in x fan_out`` so that ``h = x @ W + b``."""

    config: MlpConfig
    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def copy(self) -> Mlp:
        return Mlp(self.config, [(w.copy(), b.copy()) for w, b in self.layers])


@dataclass
class ForwardCache:
    # inputs[i] is what layer i consumed; pre[i] is its pre-activation
    inputs: list[np.ndarray]
    pre: list[np.ndarray]


def init_params(config: MlpConfig) -> Mlp:
    """He initialisation: weights ~ N(0, sqrt(2 / fan_in)), zero biases."""
    rng = Rng(config.init_seed)
    dims = config.dims
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = math.sqrt(2.0 / fan_in)
        w = rng.normals(fan_in * fan_out, 0.0, std).reshape(fan_in, fan_out)
        layers.append((w, np.zeros(fan_out)))
    return Mlp(config, layers)


def forward(model: Mlp, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ValueError(
            f"batch shape {x.shape} does not match input_dim {model.config.input_dim}"
        )
    inputs, pre = [], []
    h = x
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, ForwardCache(inputs, pre)


def predict_logits(model: Mlp, x: np.ndarray) -> np.ndarray:
    return forward(model, x)[0]


def backward(
    model: Mlp, cache: ForwardCache, dloss_dlogits: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients for every (W, b), in layer order. ReLU'(0) is taken as 0."""
    delta = np.asarray(dloss_dlogits, dtype=np.float64)
    n_layers = len(model.layers)
    if len(cache.inputs) != n_layers:
        raise ValueError("cache does not belong to this model")
    if delta.shape != cache.pre[-1].shape:
        raise ValueError(
            f"dloss_dlogits shape {delta.shape} does not match logits {cache.pre[-1].shape}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        w, _ = model.layers[i]
        grads[i] = (cache.inputs[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w.T) * (cache.pre[i - 1] > 0.0)
    return grads


@dataclass
class SgdState:
    velocity: list[tuple[np.ndarray, np.ndarray]]

    @classmethod
    def zeros_like(cls, model: Mlp) -> SgdState:
        return cls([(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers])


def sgd_step(
    model: Mlp,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: SgdState,
    config: SgdConfig,
    epoch: int,
) -> tuple[Mlp, SgdState]:
    """Coupled weight decay inside the momentum buffer, applied in place.

    v <- momentum * v + grad + weight_decay * param;  param <- param - lr(epoch) * v
    """
    lr = config.lr_at(epoch)
    for (w, b), (gw, gb), (vw, vb) in zip(model.layers, grads, state.velocity):
        for p, g, v in ((w, gw, vw), (b, gb, vb)):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v *= config.momentum
            v += g
            if config.weight_decay:
                v += config.weight_decay * p
            p -= lr * v
    return model, state


def save_checkpoint(model: Mlp, path) -> None:
    """Write the flat binary checkpoint.

    Layout (little-endian): b"CDBM", u32 version, u32 layer count, u32 dims
    (layer count + 1 of them), then per layer W row-major followed by b, as f64.
    """
    dims = model.config.dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(model.layers)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in model.layers:
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path, init_seed: int = 0) -> Mlp:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("bad magic in checkpoint")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", data, offset))
    offset += 4 * (n_layers + 1)
    config = MlpConfig(dims[0], tuple(dims[1:-1]), dims[-1], init_seed=init_seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        nw = fan_in * fan_out
        if len(data) < offset + 8 * (nw + fan_out):
            raise ValueError("truncated checkpoint")
        w = np.frombuffer(data, dtype="<f8", count=nw, offset=offset).reshape(fan_in, fan_out)
        offset += 8 * nw
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        layers.append((w.astype(np.float64), b.astype(np.float64)))
    return Mlp(config, layers)
