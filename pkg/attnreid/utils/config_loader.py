"""
Run configuration loading: YAML file, --set overrides, environment, validation.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import yaml
from pydantic import ValidationError

from ..exceptions import ConfigError
from ..models import RunConfig
from .text_parsing import format_key_path, parse_override

logger = logging.getLogger(__name__)

RUNS_ROOT_ENV = "ATTNREID_RUNS_ROOT"


def _apply_override(data: Dict[str, Any], parts, value) -> None:
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ConfigError(f"override '{'.'.join(parts)}': '{part}' is not a section")
        node = child
    node[parts[-1]] = value


def load_run_config(
    path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()
) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        path: YAML config file; None uses built-in defaults
        overrides: "key.path=value" expressions applied after the file

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: On unreadable YAML, bad overrides, unknown keys or invalid values
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must contain a mapping at the top level")
        data = loaded or {}

    for text in overrides:
        try:
            parts, value = parse_override(text)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        _apply_override(data, parts, value)

    runs_root = os.getenv(RUNS_ROOT_ENV)
    if runs_root:
        _apply_override(data, ["output", "runs_root"], runs_root)

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        problems = [f"{format_key_path(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError("Invalid configuration:\n  " + "\n  ".join(problems)) from e

    logger.debug(f"Loaded config '{config.name}' from {path or 'defaults'}")
    return config


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> None:
    """Write a config snapshot that load_run_config reads back to an equal RunConfig."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.model_dump(mode="json"), fh, sort_keys=False)
