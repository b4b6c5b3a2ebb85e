"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 a check failed under ``--check``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from predrep import io
from predrep.experiments import RUNNERS, ConfigError, all_checks_pass, load_config, report_json
from predrep.experiments.config import validate_config
from predrep.mdp import MDPError

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3
EXPERIMENTS = ("revaluation", "multitask", "navigation", "replay")
MODULE_TASKS = ("sr", "sf", "explore", "neuro")
BASE_DIR_AWARE = ("sr", "sf", "explore")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, nargs="+", help="seed list (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory (default: report JSON on stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--check", action="store_true", help="exit 3 when any report check fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predrep", description="Predictive-representation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in MODULE_TASKS:
        _common(sub.add_parser(name, help=f"run the {name} task"))
    exp = sub.add_parser("experiment", help="run a batch experiment")
    exp.add_argument("name", choices=EXPERIMENTS)
    _common(exp)
    return parser


def resolve_config(name: str, args) -> tuple[dict, Path | None]:
    base_dir = None
    if args.config is not None:
        config = load_config(args.config)
        base_dir = args.config.parent
        if config["experiment"] != name:
            raise ConfigError(f"config is for {config['experiment']!r}, not {name!r}")
    else:
        config = {"experiment": name}
    if args.seed is not None:
        config["seeds"] = list(args.seed)
    validate_config(config, base_dir)
    return config, base_dir


def write_outputs(report: dict, out: Path, fmt: str) -> list[Path]:
    tables = report.get("tables", {})
    written = []
    if fmt == "csv":
        for name, table in tables.items():
            written.append(io.write_text(out / f"{name}.csv", io.matrix_to_csv(
                [[float("nan") if x is None else x for x in row] for row in _rows(table["values"])],
                table["meta"],
            )))
        body = {k: v for k, v in report.items() if k != "tables"}
        written.append(io.write_text(out / "report.json", report_json(body)))
    else:
        written.append(io.write_text(out / "report.json", report_json(report)))
    return written


def _rows(values):
    return values if values and isinstance(values[0], list) else [values]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    name = args.name if args.command == "experiment" else args.command
    try:
        config, base_dir = resolve_config(name, args)
        runner = RUNNERS[name]
        report = runner(config, base_dir) if name in BASE_DIR_AWARE else runner(config)
    except (ConfigError, MDPError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is not None:
        write_outputs(report, args.out, args.format)
    else:
        sys.stdout.write(report_json(report) + "\n")
    for check, ok in report["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {check}", file=sys.stderr)
    if args.check and not all_checks_pass(report):
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
