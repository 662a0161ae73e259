"""
Logging setup for entry points.

Console output goes through colorlog; run directories additionally get a
JSON-lines event log rendered by structlog.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import colorlog
import structlog

from .settings import settings

CONSOLE_FORMAT = "%(log_color)s%(asctime)s - %(name)s - %(levelname)s%(reset)s - %(message)s"

_PACKAGE_LOGGER = "src"


def configure_logging(
    level: Optional[str] = None,
    json_log_path: Optional[Union[str, Path]] = None,
) -> Optional[logging.Handler]:
    """
    Install the colored console handler on the root logger.

    Args:
        level: Level name; defaults to LOG_LEVEL (or DEBUG when DEBUG=true)
        json_log_path: When given, also write package records there as JSON lines

    Returns:
        The JSON file handler if one was attached, so the caller can detach it
    """
    level_name = (level or ("DEBUG" if settings.DEBUG else settings.LOG_LEVEL)).upper()
    root = logging.getLogger()
    root.setLevel(level_name)

    if not any(isinstance(h.formatter, colorlog.ColoredFormatter) for h in root.handlers):
        handler = colorlog.StreamHandler()
        handler.setFormatter(colorlog.ColoredFormatter(CONSOLE_FORMAT))
        root.addHandler(handler)

    if json_log_path is None:
        return None
    return attach_run_log(json_log_path)


def attach_run_log(path: Union[str, Path]) -> logging.Handler:
    """Write every package log record to `path` as one JSON object per line."""
    formatter = structlog.stdlib.ProcessorFormatter(
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        foreign_pre_chain=[
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
        ],
    )
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(formatter)
    handler.setLevel(logging.DEBUG)
    package_logger = logging.getLogger(_PACKAGE_LOGGER)
    package_logger.addHandler(handler)
    if package_logger.level == logging.NOTSET or package_logger.level > logging.INFO:
        package_logger.setLevel(logging.INFO)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger(_PACKAGE_LOGGER).removeHandler(handler)
    handler.close()
