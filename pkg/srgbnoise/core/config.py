"""Core runtime configuration for srgbnoise.

Settings are plain class attributes, selected by profile name. Environment variables are
never consulted: every run is fully described by its config file, `--set` overrides and
the profile.
"""
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from srgbnoise.utils.errors import NotFoundError, ParseError


class Config:
    """Base configuration class."""

    # Logging
    LOG_LEVEL = "INFO"
    LOG_FORMAT = "text"  # json or text
    LOG_ROTATION = "50 MB"

    # Compute
    DEVICE = "cpu"
    NUM_WORKERS = 0
    DEFAULT_SEED = 0

    # Checkpoint container
    CHECKPOINT_FORMAT = "srgbnoise-checkpoint"
    CHECKPOINT_VERSION = 1

    # Sidecars
    RUN_META_NAME = "run.meta"
    ORACLE_META_NAME = "oracle.meta"
    MANIFEST_NAME = "manifest.tsv"


class DefaultConfig(Config):
    """Default command-line configuration."""


class DebugConfig(Config):
    """Verbose configuration for local debugging."""

    LOG_LEVEL = "DEBUG"


class TestingConfig(Config):
    """Testing configuration."""

    LOG_LEVEL = "WARNING"
    LOG_FORMAT = "text"


class JsonLogConfig(Config):
    """Machine-readable logs for batch jobs."""

    LOG_FORMAT = "json"


config_by_name = {
    "default": DefaultConfig,
    "debug": DebugConfig,
    "testing": TestingConfig,
    "json": JsonLogConfig,
}


def get_config(name: Optional[str] = None) -> Config:
    """Get configuration by profile name (falls back to the default profile)."""
    return config_by_name.get(name or "default", DefaultConfig)()


def parse_override(item: str) -> tuple:
    """
    Parse one `key=value` override.

    Values are read as YAML scalars, so `epochs=3`, `enable_gan=false` and
    `camera_filter=S6` all load with their natural types.
    """
    if "=" not in item:
        raise ParseError(f"Override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ParseError(f"Override '{item}' has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ParseError(f"Override '{item}' has an unparseable value: {e}")
    return key, value


def load_config_mapping(
    path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None
) -> Dict[str, Any]:
    """
    Read a YAML config file and merge overrides on top.

    Args:
        path: Optional YAML file holding one command's key set
        overrides: Already-parsed `--set` values

    Returns:
        Raw mapping, to be validated by the command's schema
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise NotFoundError(f"Config file not found: {path}", path=str(path))
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ParseError(f"Config file {path} is not valid YAML: {e}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ParseError(f"Config file {path} must hold a mapping of keys")
        data.update(loaded)
    if overrides:
        data.update(overrides)
    return data
