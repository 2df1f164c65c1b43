"""Training loop, multi-seed experiments and their on-disk artifacts."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import data as D
from .. import difficulty, losses, metrics
from ..model import Mlp, MlpConfig, SgdState, backward, forward, init_params, predict_logits, sgd_step
from ..numkit import Rng
from .config import ExperimentConfig, resolve_output_dir

log = logging.getLogger(__name__)

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


class TrainingError(RuntimeError):
    pass


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    tau: float
    bias: float
    val_accuracy: list[float]
    weights: list[float]


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    num_classes: int
    rows: list[EpochRow] = field(default_factory=list)
    # weights used for the loss during each epoch (row e's weights feed epoch e + 1)
    applied_weights: list[list[float]] = field(default_factory=list)
    summary: metrics.TrialSummary | None = None
    train_counts: list[int] = field(default_factory=list)
    model: Mlp | None = None

    def trace_csv(self) -> str:
        c = self.num_classes
        header = ["epoch", "train_loss", "tau", "bias"]
        header += [f"acc_c{i}" for i in range(c)] + [f"w_c{i}" for i in range(c)]
        lines = [",".join(header)]
        for r in self.rows:
            vals = [r.train_loss, r.tau, r.bias, *r.val_accuracy, *r.weights]
            lines.append(",".join([str(r.epoch)] + [_fmt(v) for v in vals]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "train_counts": self.train_counts,
            "summary": self.summary.to_dict() if self.summary else None,
        }


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class TrialData:
    train: D.LabeledDataset
    val: D.LabeledDataset
    test: D.LabeledDataset


def trial_streams(seed: int) -> dict[str, Rng]:
    """Independent child streams of one trial seed: data, init and shuffle."""
    root = Rng(seed)
    return {name: root.split() for name in ("data", "init", "shuffle")}


@lru_cache(maxsize=2)
def _load_mnist(mnist_dir: str) -> tuple[D.LabeledDataset, D.LabeledDataset]:
    base = Path(mnist_dir)

    def find(stem: str) -> Path:
        for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
            if (base / name).exists():
                return base / name
        raise FileNotFoundError(f"{stem} not found in {base}")

    train = D.read_idx(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"))
    test = D.read_idx(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"))
    return train, test


def build_datasets(config: ExperimentConfig, seed: int) -> TrialData:
    """Materialise train/val/test for one trial; val is split off before any inducer."""
    rng = trial_streams(seed)["data"]
    inducer = config["dataset.inducer"]
    if config["dataset.source"] == "synthetic":
        args = (config["dataset.num_classes"],)
        kw = dict(dim=config["dataset.dim"], class_separation=config["dataset.separation"])
        pool = D.make_gaussian_mixture(*args, config["dataset.samples_per_class"], seed=rng, **kw)
        test = D.make_gaussian_mixture(*args, config["dataset.test_per_class"], seed=rng, **kw)
        if inducer == "majority_ratio":
            spec = config.majority
            classes = [spec.minority_class, spec.majority_class]
            pool = D.select_classes(pool, classes)
            test = D.select_classes(test, classes)
    else:
        full_train, full_test = _load_mnist(config["dataset.mnist_dir"])
        pool, test_source = full_train, full_test
        if inducer == "majority_ratio":
            spec = config.majority
            classes = [spec.minority_class, spec.majority_class]
            pool = D.select_classes(pool, classes)
            test_source = D.select_classes(test_source, classes)
        test = D.take_per_class(test_source, config["dataset.test_per_class"], rng)
    train, val = D.split_validation(pool, config["val.per_class"], rng)
    if inducer == "majority_ratio":
        spec = config.majority
        binary = D.MajoritySpec(spec.total, majority_class=1, minority_class=0, ratio=spec.ratio)
        train = D.induce_majority_ratio(train, binary, rng)
    elif inducer == "long_tail":
        train = D.induce_long_tail(train, config.long_tail, rng)
    return TrialData(train, val, test)


def _groups(train_counts: np.ndarray, group_size: int) -> tuple[list[int], list[int]]:
    """Smallest and largest ``group_size`` training classes (ties by index)."""
    c = len(train_counts)
    k = group_size if group_size > 0 else max(1, c // 2)
    order = sorted(range(c), key=lambda i: (train_counts[i], i))
    return sorted(order[:k]), sorted(order[-k:])


def train_one(
    config: ExperimentConfig,
    seed: int,
    train: D.LabeledDataset,
    val: D.LabeledDataset,
    test: D.LabeledDataset,
) -> RunRecord:
    if threadpool_limits is not None:
        # BLAS reductions must not depend on the host's core count
        with threadpool_limits(limits=1):
            return _train_one(config, seed, train, val, test)
    return _train_one(config, seed, train, val, test)


def _train_one(config, seed, train, val, test) -> RunRecord:
    spec = config.loss
    sgd = config.optimizer
    c = train.num_classes
    if not (train.dim == val.dim == test.dim) or not (c == val.num_classes == test.num_classes):
        raise TrainingError(
            f"dimension mismatch: train {train.dim}/{c}, val {val.dim}/{val.num_classes}, "
            f"test {test.dim}/{test.num_classes}"
        )
    if spec.kind == "cdb_ce" and len(val) == 0:
        raise TrainingError("CDB requires validation data")
    streams = trial_streams(seed)
    model = init_params(
        MlpConfig(
            train.dim,
            config["model.hidden_dims"],
            c,
            config["model.activation"],
            init_seed=streams["init"].next_u64(),
        )
    )
    state = SgdState.zeros_like(model)
    record = RunRecord(seed, config.config_hash(), c, train_counts=train.class_counts.tolist())

    static = losses.static_class_weights(spec, train.class_counts)
    if spec.kind == "cdb_ce":
        class_w = difficulty.DifficultyState.initial(c).weights
    else:
        class_w = static if static is not None else np.ones(c)

    n, bs = len(train), config["batch_size"]
    shuffle_rng = streams["shuffle"]
    for epoch in range(config["epochs"]):
        record.applied_weights.append(class_w.tolist())
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            logits, cache = forward(model, train.features[idx])
            res = losses.compute_loss(spec, logits, train.labels[idx], class_w)
            if not math.isfinite(res.mean_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            loss_sum += float(res.per_sample_loss.sum())
            sgd_step(model, backward(model, cache, res.dloss_dlogits), state, sgd, epoch)
        train_loss = loss_sum / n if n else 0.0

        if len(val):
            preds = metrics.argmax_predictions(predict_logits(model, val.features))
            stats = difficulty.class_accuracies(preds, val.labels, c)
            dstate = difficulty.update(stats, spec, epoch + 1)
            acc = stats.accuracy.tolist()
            b = dstate.bias
        else:
            dstate, acc, b = None, [float("nan")] * c, float("nan")
        if spec.kind == "cdb_ce":
            class_w = dstate.weights
            tau = dstate.tau
        else:
            tau = float("nan")
        record.rows.append(EpochRow(epoch, train_loss, tau, b, acc, class_w.tolist()))
        log.debug("seed %d epoch %d loss %.6f tau %.4f", seed, epoch, train_loss, tau)

    minority, majority = _groups(train.class_counts, config["report.group_size"])
    record.summary = metrics.summarize(
        predict_logits(model, test.features),
        test.labels,
        ks=config["report.topk"],
        minority_group=minority,
        majority_group=majority,
    )
    record.model = model
    return record


def run_trial(config: ExperimentConfig, seed: int) -> RunRecord:
    d = build_datasets(config, seed)
    return train_one(config, seed, d.train, d.val, d.test)


def write_trial(record: RunRecord, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"trace_seed{record.seed}.csv").write_text(record.trace_csv())
    (out / f"trial_seed{record.seed}.json").write_text(_dumps(record.to_dict()))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def aggregate_report(config_hash: str, seeds, summaries) -> dict:
    agg = metrics.aggregate_trials(summaries)
    return {
        "config_hash": config_hash,
        "seeds": list(seeds),
        "trials": [s.to_dict() for s in summaries],
        "aggregate": {k: {"mean": m, "std": s} for k, (m, s) in agg.items()},
    }


def run_experiment(
    config: ExperimentConfig, output_dir=None, threads: int = 1
) -> tuple[list[RunRecord], dict]:
    """One trial per seed, aggregated; writes traces, per-trial JSON and summary.json.

    Any failed trial aborts the experiment (already finished trials stay on disk).
    """
    out = Path(output_dir) if output_dir is not None else resolve_output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.to_text(include_non_result=False))
    seeds = list(config["seeds"])
    records: dict[int, RunRecord] = {}
    if threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {s: pool.submit(run_trial, config, s) for s in seeds}
            for s in seeds:
                try:
                    records[s] = futures[s].result()
                except Exception as exc:
                    for f in futures.values():
                        f.cancel()
                    raise TrainingError(f"trial seed={s} failed: {exc}") from exc
                write_trial(records[s], out)
    else:
        for s in seeds:
            try:
                records[s] = run_trial(config, s)
            except Exception as exc:
                raise TrainingError(f"trial seed={s} failed: {exc}") from exc
            write_trial(records[s], out)
            log.info("seed %d: error %.4f", s, records[s].summary.error_rate)
    ordered = [records[s] for s in seeds]
    report = aggregate_report(config.config_hash(), seeds, [r.summary for r in ordered])
    (out / "summary.json").write_text(_dumps(report))
    return ordered, report


def load_report(directory) -> dict:
    """Re-aggregate from the per-trial JSON files found in ``directory``."""
    directory = Path(directory)
    trials = []
    for path in directory.glob("trial_seed*.json"):
        trials.append(json.loads(path.read_text()))
    if not trials:
        raise FileNotFoundError(f"no trial_seed*.json files in {directory}")
    trials.sort(key=lambda t: t["seed"])
    hashes = {t["config_hash"] for t in trials}
    if len(hashes) != 1:
        raise ValueError(f"trials in {directory} come from different configs: {sorted(hashes)}")
    summaries = [metrics.TrialSummary.from_dict(t["summary"]) for t in trials]
    return aggregate_report(hashes.pop(), [t["seed"] for t in trials], summaries)
