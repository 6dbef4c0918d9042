"""
Run logging: one "qfx" logger, console output plus an optional log file.

Per-epoch and per-step summaries go to INFO, per-batch training detail to
DEBUG. Set LOG_FILE to keep a run's log next to its reports.
"""
import logging
import sys
from pathlib import Path
from typing import Optional

try:
    from core.config import settings
    log_level = settings.LOG_LEVEL
    log_file = settings.LOG_FILE
except ImportError:
    log_level = "INFO"
    log_file = None


LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _handler(handler: logging.Handler, level: str) -> logging.Handler:
    handler.setLevel(getattr(logging, level))
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logger(name: str = "qfx", level: str = log_level, file: Optional[str] = log_file) -> logging.Logger:
    """
    Configure the engine logger

    Args:
        name: Logger name
        level: Level name for the logger and its handlers
        file: Optional path of a log file (appended to)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level))

    if not logger.handlers:
        logger.addHandler(_handler(logging.StreamHandler(sys.stdout), level))
        if file:
            Path(file).parent.mkdir(parents=True, exist_ok=True)
            logger.addHandler(_handler(logging.FileHandler(file, encoding="utf-8"), level))

    return logger


def set_level(level: str) -> None:
    """Change the level of the engine logger and all its handlers (e.g. DEBUG for per-batch logs)."""
    value = getattr(logging, level.upper())
    logger.setLevel(value)
    for handler in logger.handlers:
        handler.setLevel(value)


# Create default logger instance
logger = setup_logger()
