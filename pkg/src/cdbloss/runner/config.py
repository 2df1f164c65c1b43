"""Experiment configuration: a flat ``key = value`` text format.

Lines are ``dotted.key = value``; ``#`` starts a comment. Unknown keys, bad
values and missing required keys raise :class:`ConfigError` citing the line.
Every key and its default is listed in ``KEYS``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..data import LongTailSpec, MajoritySpec
from ..losses import LOSS_KINDS, TAU_MODES, LossSpec
from ..model import SgdConfig


class ConfigError(ValueError):
    pass


def _real(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ValueError("expected real") from None


def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ValueError("expected integer") from None


def _int_list(s: str) -> tuple[int, ...]:
    s = s.strip()
    if not s:
        return ()
    try:
        return tuple(int(x) for x in s.split(","))
    except ValueError:
        raise ValueError("expected comma-separated integers") from None


def _count_or_fraction(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    v = _real(s)
    if not 0 <= v < 1:
        raise ValueError("expected a count or a fraction in [0, 1)")
    return v


def _optional_real(s: str):
    return None if s.strip().lower() in ("", "none") else _real(s)


def _choice(*options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s

    return parse


def _text(s: str) -> str:
    return s


# key -> (parser, default)
KEYS: dict[str, tuple] = {
    "dataset.source": (_choice("synthetic", "mnist_idx"), "synthetic"),
    "dataset.inducer": (_choice("none", "majority_ratio", "long_tail"), "none"),
    "dataset.mnist_dir": (_text, ""),
    "dataset.num_classes": (_int, 2),
    "dataset.samples_per_class": (_int, 500),
    "dataset.dim": (_int, 2),
    "dataset.separation": (_real, 3.0),
    "dataset.test_per_class": (_int, 500),
    "dataset.total": (_int, 5000),
    "dataset.majority_class": (_int, 9),
    "dataset.minority_class": (_int, 4),
    "dataset.ratio": (_real, 0.9),
    "dataset.mu": (_optional_real, None),
    "dataset.imbalance_factor": (_optional_real, None),
    "val.per_class": (_count_or_fraction, 50),
    "model.hidden_dims": (_int_list, (256,)),
    "model.activation": (_choice("relu"), "relu"),
    "optimizer.lr": (_real, 0.001),
    "optimizer.momentum": (_real, 0.9),
    "optimizer.weight_decay": (_real, 0.0005),
    "optimizer.lr_decay_factor": (_real, 0.1),
    "optimizer.lr_decay_epochs": (_int_list, ()),
    "loss.kind": (_choice(*LOSS_KINDS), "ce"),
    "loss.tau_mode": (_choice(*TAU_MODES), "dynamic"),
    "loss.tau": (_real, 1.0),
    "loss.focal_gamma": (_real, 2.0),
    "loss.cb_beta": (_real, 0.999),
    "epochs": (_int, 300),
    "batch_size": (_int, 100),
    "seeds": (_int_list, (1,)),
    "report.topk": (_int_list, (1,)),
    "report.group_size": (_int, 0),
    "output_dir": (_text, "runs"),
}

# keys that do not influence results and are left out of the config hash
NON_RESULT_KEYS = ("output_dir",)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat mapping of every key in ``KEYS`` to its parsed value."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: default for k, (_, default) in KEYS.items()}
        unknown = set(self.values) - set(KEYS)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        merged.update(self.values)
        object.__setattr__(self, "values", merged)
        self._validate()

    def __getitem__(self, key: str):
        return self.values[key]

    def _validate(self):
        v = self.values
        if v["epochs"] < 1:
            raise ConfigError("epochs must be >= 1")
        if v["batch_size"] < 1:
            raise ConfigError("batch_size must be >= 1")
        if not v["seeds"]:
            raise ConfigError("seeds must be non-empty")
        try:
            self.loss
            self.optimizer
            if v["dataset.inducer"] == "majority_ratio":
                self.majority
            if v["dataset.inducer"] == "long_tail":
                self.long_tail
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def with_values(self, **updates) -> ExperimentConfig:
        return ExperimentConfig({**self.values, **updates})

    def override(self, key: str, text: str) -> ExperimentConfig:
        """Return a copy with ``key`` set from its text form."""
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            value = KEYS[key][0](text.strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        return self.with_values(**{key: value})

    @property
    def loss(self) -> LossSpec:
        v = self.values
        return LossSpec(
            kind=v["loss.kind"],
            tau_mode=v["loss.tau_mode"],
            tau=v["loss.tau"],
            focal_gamma=v["loss.focal_gamma"],
            cb_beta=v["loss.cb_beta"],
        )

    @property
    def optimizer(self) -> SgdConfig:
        v = self.values
        return SgdConfig(
            lr=v["optimizer.lr"],
            momentum=v["optimizer.momentum"],
            weight_decay=v["optimizer.weight_decay"],
            lr_decay_factor=v["optimizer.lr_decay_factor"],
            lr_decay_epochs=v["optimizer.lr_decay_epochs"],
        )

    @property
    def majority(self) -> MajoritySpec:
        v = self.values
        return MajoritySpec(
            total=v["dataset.total"],
            majority_class=v["dataset.majority_class"],
            minority_class=v["dataset.minority_class"],
            ratio=v["dataset.ratio"],
        )

    @property
    def long_tail(self) -> LongTailSpec:
        return LongTailSpec(mu=self["dataset.mu"], imbalance_factor=self["dataset.imbalance_factor"])

    def to_text(self, include_non_result: bool = True) -> str:
        lines = []
        for key in sorted(self.values):
            if not include_non_result and key in NON_RESULT_KEYS:
                continue
            lines.append(f"{key} = {format_value(self.values[key])}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text(include_non_result=False).encode()).hexdigest()[:16]


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(x) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, _, text_value = (part.strip() for part in line.partition("="))
        if key not in KEYS:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key][0](text_value)
        except ValueError as exc:
            raise ConfigError(f"{source}: line {lineno}: {exc}") from None
    if values.get("dataset.source") == "mnist_idx" and not values.get("dataset.mnist_dir"):
        raise ConfigError(f"{source}: missing required key 'dataset.mnist_dir' for mnist_idx")
    try:
        return ExperimentConfig(values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def resolve_output_dir(config: ExperimentConfig, cli_value: str | None = None) -> Path:
    """``--output-dir`` beats ``CDB_OUTPUT_DIR``, which beats the config file."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get("CDB_OUTPUT_DIR")
    if env:
        return Path(env)
    return Path(config["output_dir"])

