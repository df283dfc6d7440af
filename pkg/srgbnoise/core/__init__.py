"""Core package initialization."""
from srgbnoise.core.config import Config, config_by_name, get_config
from srgbnoise.core.logging import add_training_log, setup_logging, training_logger

__all__ = [
    "Config",
    "config_by_name",
    "get_config",
    "setup_logging",
    "add_training_log",
    "training_logger",
]
