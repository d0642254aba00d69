"""Utility modules - provide common utility functions and classes."""
from ucfem.utils.file_utils import (
    atomic_write_text,
    ensure_directory,
    get_text_hash,
    load_flat_config,
    safe_remove,
)
from ucfem.utils.logger import get_logger, setup_logger

__all__ = [
    "atomic_write_text",
    "ensure_directory",
    "get_text_hash",
    "load_flat_config",
    "safe_remove",
    "setup_logger",
    "get_logger",
]
