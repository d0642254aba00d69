"""
Logging configuration with rotating file handlers.

Every module calls ``get_logger(__name__)`` at import. Handlers are attached
once per logger name; the two rotating files under ``settings.log_dir`` are
only created when ``settings.log_to_file`` is set.
"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from ucfem.config import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# 10MB per file, 10 backups
MAX_BYTES = 10 * 1024 * 1024
BACKUP_COUNT = 10


def _resolve_level(level: Optional[int]) -> int:
    if level is not None:
        return level
    return getattr(logging, settings.log_level.upper(), logging.INFO)


def _rotating_handler(path: Path, level: int, formatter: logging.Formatter) -> RotatingFileHandler:
    handler = RotatingFileHandler(path, maxBytes=MAX_BYTES, backupCount=BACKUP_COUNT, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logger(name: str, level: Optional[int] = None) -> logging.Logger:
    """
    Set up a logger with a stdout handler and, optionally, app.log and error.log.

    Args:
        name: Logger name (usually __name__)
        level: Logging level; defaults to ``settings.log_level``

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    level = _resolve_level(level)
    logger.setLevel(level)
    logger.propagate = False
    formatter = logging.Formatter(LOG_FORMAT, DATE_FORMAT)

    console = logging.StreamHandler(sys.stdout)
    console.setLevel(level)
    console.setFormatter(formatter)
    logger.addHandler(console)

    if settings.log_to_file:
        logs_dir = Path(settings.log_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)
        logger.addHandler(_rotating_handler(logs_dir / "app.log", level, formatter))
        logger.addHandler(_rotating_handler(logs_dir / "error.log", logging.ERROR, formatter))

    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Return the named logger, or the package logger when ``name`` is None."""
    return setup_logger(name or "ucfem")
