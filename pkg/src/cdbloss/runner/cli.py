"""Command-line entry point: ``cdb run|sweep|gen-data|report``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import data as D
from .config import ConfigError, parse_config, resolve_output_dir
from .report import collect_sweep, sweep, write_table
from .train import build_datasets, load_report, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="comma-separated seeds replacing the config's list")
    common.add_argument("--output-dir", help="overrides CDB_OUTPUT_DIR and the config file")
    common.add_argument("--threads", type=int, default=1, help="trials run in parallel")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cdb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    p = sub.add_parser("run", parents=[common], help="run an experiment")
    p.add_argument("config")
    p = sub.add_parser("sweep", parents=[common], help="cartesian sweep over config keys")
    p.add_argument("config")
    p.add_argument("--param", action="append", required=True, help="dotted config key")
    p.add_argument("--values", action="append", required=True, help="comma-separated values")
    p = sub.add_parser("gen-data", parents=[common], help="write the induced datasets as CSV")
    p.add_argument("config")
    p = sub.add_parser("report", parents=[common], help="re-aggregate stored trial records")
    p.add_argument("dir")
    p.add_argument("--metric", default="error_rate")
    return parser


def _load(args):
    config = parse_config(args.config)
    if args.seed:
        config = config.override("seeds", args.seed)
    return config


def _print_aggregate(report: dict) -> None:
    for name, cell in report["aggregate"].items():
        print(f"{name:>16s}  {cell['mean']:.6f} ± {cell['std']:.6f}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            config = _load(args)
            out = resolve_output_dir(config, args.output_dir)
            _, report = run_experiment(config, out, threads=args.threads)
            _print_aggregate(report)
        elif args.command == "sweep":
            config = _load(args)
            if len(args.param) != len(args.values):
                raise ConfigError("each --param needs a matching --values")
            params = [(k, v.split(",")) for k, v in zip(args.param, args.values)]
            for k, values in params:
                for v in values:
                    config.override(k, v)  # fail before any training starts
            out = resolve_output_dir(config, args.output_dir)
            results = sweep(config, params, out, threads=args.threads)
            print(write_table(results, [k for k, _ in params], out / "table.csv"), end="")
        elif args.command == "gen-data":
            config = _load(args)
            out = resolve_output_dir(config, args.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            seed = config["seeds"][0]
            d = build_datasets(config, seed)
            for name in ("train", "val", "test"):
                D.write_csv(getattr(d, name), out / f"{name}_seed{seed}.csv")
            print(f"train counts {d.train.class_counts.tolist()} -> {out}")
        elif args.command == "report":
            directory = Path(args.dir)
            if any(directory.glob("trial_seed*.json")):
                report = load_report(directory)
                (directory / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
                _print_aggregate(report)
            else:
                results, keys = collect_sweep(directory)
                if not results:
                    raise FileNotFoundError(f"no trial records under {directory}")
                print(write_table(results, keys, directory / "table.csv", args.metric), end="")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
