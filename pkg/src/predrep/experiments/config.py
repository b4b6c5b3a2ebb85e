"""Experiment configuration: JSON-schema validation and per-experiment defaults."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema


class ConfigError(ValueError):
    """Schema violation, missing file or an inconsistent experiment setup."""


def load_schema() -> dict:
    text = resources.files("predrep").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


def validate_config(config: dict, base_dir: Path | None = None) -> dict:
    """Validate against the shipped schema; check referenced files exist."""
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}") from None
    env = config.get("environment", {})
    if "gridworld_file" in env:
        path = Path(env["gridworld_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"gridworld_file {str(path)!r} does not exist")
    return config


def merge_defaults(config: dict, defaults: dict) -> dict:
    """Recursive dict merge; values in ``config`` win, lists are replaced."""
    out = copy.deepcopy(defaults)
    for key, value in config.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_defaults(value, out[key])
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        config = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {str(path)!r} does not exist") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    return validate_config(config, path.parent)


def agent_params(config: dict, kind: str) -> dict | None:
    """Parameters of the agent of type ``kind``, or None if it is not configured."""
    for agent in config.get("agents", []):
        if agent["type"] == kind:
            return agent.get("params", {})
    return None
