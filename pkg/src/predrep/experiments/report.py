"""Experiment reports: per-seed records, aggregates recomputed from them, checks."""

from __future__ import annotations

import datetime as _dt
import platform

import numpy as np

from predrep import io

VERSION = "0.1.0"


def versions() -> dict:
    import networkx
    import scipy

    return {
        "predrep": VERSION,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "networkx": networkx.__version__,
        "python": platform.python_version(),
    }


def make_report(experiment: str, config: dict, records: list, aggregate: dict, checks: dict) -> dict:
    """Assemble a report; records are sorted by seed so merges are order independent.

    The only non-reproducible value, the timestamp, lives under ``meta``.
    """
    return {
        "experiment": experiment,
        "config": config,
        "versions": versions(),
        "records": sorted(records, key=lambda r: r["seed"]),
        "aggregate": aggregate,
        "checks": {k: bool(v) for k, v in checks.items()},
        "meta": {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }


def report_json(report: dict, include_meta: bool = True) -> str:
    body = report if include_meta else {k: v for k, v in report.items() if k != "meta"}
    return io.to_json(body)


def all_checks_pass(report: dict) -> bool:
    return all(report["checks"].values())
