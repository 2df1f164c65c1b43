"""Grid sweeps and table-shaped reports (mean +- std per cell)."""

from __future__ import annotations

import itertools
from pathlib import Path

from .config import ExperimentConfig
from .train import load_report, run_experiment

PERCENT_METRICS = ("error_rate", "top1", "macro_recall", "macro_precision", "minority_recall", "majority_recall")


def point_dirname(assignment: dict[str, str]) -> str:
    return ",".join(f"{k}={v}" for k, v in assignment.items())


def sweep(
    config: ExperimentConfig,
    params: list[tuple[str, list[str]]],
    output_dir,
    threads: int = 1,
) -> list[tuple[dict[str, str], dict]]:
    """Cartesian product over ``params``; one experiment directory per point."""
    out = Path(output_dir)
    results = []
    keys = [k for k, _ in params]
    for combo in itertools.product(*[values for _, values in params]):
        assignment = dict(zip(keys, combo))
        point = config
        for k, v in assignment.items():
            point = point.override(k, v)
        _, report = run_experiment(point, out / point_dirname(assignment), threads=threads)
        results.append((assignment, report))
    write_table(results, keys, out / "table.csv")
    return results


def _cell(report: dict, metric: str, scale: float) -> tuple[float, float]:
    agg = report["aggregate"][metric]
    return agg["mean"] * scale, agg["std"] * scale


def write_table(results, keys, path, metric: str = "error_rate") -> str:
    """Rows = values of the first key, columns = values of the second key.

    With a single swept key there is one column named after the metric.
    Each column appears as ``mean±std`` plus machine-readable ``_mean``/``_std``.
    """
    scale = 100.0 if metric in PERCENT_METRICS else 1.0
    row_key = keys[0]
    col_key = keys[1] if len(keys) > 1 else None
    rows: dict[str, dict[str, tuple[float, float]]] = {}
    cols: list[str] = []
    for assignment, report in results:
        r = assignment[row_key]
        c = assignment[col_key] if col_key else metric
        if c not in cols:
            cols.append(c)
        rows.setdefault(r, {})[c] = _cell(report, metric, scale)
    header = [row_key if not col_key else f"{row_key}\\{col_key}"]
    for c in cols:
        header += [c, f"{c}_mean", f"{c}_std"]
    lines = [",".join(header)]
    for r, cells in rows.items():
        line = [r]
        for c in cols:
            if c in cells:
                m, s = cells[c]
                line += [f"{m:.2f}±{s:.2f}", format(m, ".17g"), format(s, ".17g")]
            else:
                line += ["", "", ""]
        lines.append(",".join(line))
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text)
    return text


def collect_sweep(directory) -> tuple[list[tuple[dict[str, str], dict]], list[str]]:
    """Re-aggregate every point directory written by :func:`sweep` from its trial files."""
    results = []
    keys: list[str] = []
    for sub in sorted(Path(directory).iterdir()):
        if not (sub.is_dir() and "=" in sub.name and any(sub.glob("trial_seed*.json"))):
            continue
        assignment = dict(part.split("=", 1) for part in sub.name.split(","))
        keys = list(assignment)
        results.append((assignment, load_report(sub)))
    return results, keys
