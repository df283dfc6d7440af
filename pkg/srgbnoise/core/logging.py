"""Logging configuration using loguru."""
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

from loguru import logger as loguru_logger

from srgbnoise.core.config import Config

TRAIN_CHANNEL = "train"

_TEXT_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)


def _format_json(record: Dict) -> str:
    """Format log record as one JSON line."""
    base = {
        "timestamp": record["time"].isoformat(),
        "level": record["level"].name,
        "message": record["message"],
        "module": record["name"],
        "function": record["function"],
        "line": record["line"],
    }
    if record["extra"]:
        base.update({k: v for k, v in record["extra"].items() if k != "channel"})
    # loguru treats the returned string as a template
    return json.dumps(base, default=str).replace("{", "{{").replace("}", "}}") + "\n"


def _not_training_channel(record: Dict) -> bool:
    return record["extra"].get("channel") != TRAIN_CHANNEL


def setup_logging(config: Config, log_dir: Optional[Path] = None) -> None:
    """Configure loguru for structured logging."""
    log = loguru_logger
    log.remove()

    log_format = config.LOG_FORMAT
    log_level = config.LOG_LEVEL

    if log_format == "json":
        log.add(sys.stderr, format=_format_json, level=log_level, filter=_not_training_channel)
    else:
        log.add(
            sys.stderr,
            format=_TEXT_FORMAT,
            level=log_level,
            colorize=True,
            filter=_not_training_channel,
        )

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log.add(
            log_dir / "srgbnoise.log",
            rotation=config.LOG_ROTATION,
            level=log_level,
            format=_format_json if log_format == "json" else _TEXT_FORMAT,
            filter=_not_training_channel,
            colorize=False,
        )

    class InterceptHandler(logging.Handler):
        """Intercept standard logging and redirect to loguru."""

        def emit(self, record):
            try:
                level = log.level(record.levelname).name
            except ValueError:
                level = record.levelno

            frame, depth = logging.currentframe(), 2
            while frame and frame.f_code.co_filename == logging.__file__:
                frame = frame.f_back
                depth += 1

            log.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    for name in ("PIL", "matplotlib"):
        logging.getLogger(name).setLevel(logging.WARNING)

    log.debug("Logging configured", log_format=log_format, log_level=log_level)


def add_training_log(path: Path) -> int:
    """
    Attach the tab-separated training log sink.

    Only records bound to the training channel reach it, and they are written as the bare
    message so the file stays machine-readable.

    Returns:
        loguru handler id, for `logger.remove`
    """
    return loguru_logger.add(
        Path(path),
        format="{message}",
        level="INFO",
        filter=lambda record: record["extra"].get("channel") == TRAIN_CHANNEL,
        colorize=False,
    )


training_logger = loguru_logger.bind(channel=TRAIN_CHANNEL)
