"""Batch experiments: revaluation, multi-task GPI, navigation, replay and neuro demos."""

from predrep.experiments.config import ConfigError, load_config, validate_config
from predrep.experiments.demos import (
    run_explore_task,
    run_neuro_maps,
    run_replay_demo,
    run_sf_task,
    run_sr_task,
)
from predrep.experiments.multitask import run_multitask
from predrep.experiments.navigation import run_navigation
from predrep.experiments.report import all_checks_pass, report_json
from predrep.experiments.revaluation import run_revaluation

RUNNERS = {
    "revaluation": run_revaluation,
    "multitask": run_multitask,
    "navigation": run_navigation,
    "replay": run_replay_demo,
    "neuro": run_neuro_maps,
    "sr": run_sr_task,
    "sf": run_sf_task,
    "explore": run_explore_task,
}

__all__ = [
    "ConfigError",
    "RUNNERS",
    "all_checks_pass",
    "load_config",
    "report_json",
    "validate_config",
]
