"""Utility functions for file operations."""
import hashlib
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

import yaml

from ucfem.exceptions import OutputError

PathLike = Union[str, Path]


def ensure_directory(path: PathLike) -> Path:
    """
    Ensure directory exists, create if it doesn't.

    Args:
        path: Directory path

    Returns:
        Path: The directory path

    Raises:
        OutputError: If the directory cannot be created or is not writable
    """
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Cannot create directory {directory}: {e}") from e
    if not os.access(directory, os.W_OK):
        raise OutputError(f"Directory is not writable: {directory}")
    return directory


def atomic_write_text(path: PathLike, text: str) -> Path:
    """
    Write text to a file atomically (temporary file + rename).

    Args:
        path: Target file path
        text: File content

    Returns:
        Path: The written path
    """
    target = Path(path)
    directory = ensure_directory(target.parent)
    try:
        fd, tmp_name = tempfile.mkstemp(dir=directory, prefix=f".{target.name}.")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, target)
    except OSError as e:
        raise OutputError(f"Failed to write {target}: {e}") from e
    return target


def get_text_hash(text: str) -> str:
    """
    Calculate the SHA-256 hash of a text.

    Args:
        text: Text to hash

    Returns:
        str: Hex digest
    """
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def safe_remove(path: PathLike) -> bool:
    """
    Safely remove file or directory.

    Args:
        path: Path to remove

    Returns:
        bool: True if successful
    """
    try:
        if os.path.isfile(path):
            os.remove(path)
        elif os.path.isdir(path):
            shutil.rmtree(path)
        return True
    except OSError:
        return False


def load_flat_config(config_path: PathLike) -> Dict[str, Any]:
    """
    Parse a flat ``key: value`` configuration file.

    Keys are normalized to snake_case so that files may use the CLI flag
    spelling (``perturb-q``) or the field spelling (``perturb_q``).

    Args:
        config_path: Path to the configuration file

    Returns:
        Dict: Parsed key-value pairs

    Raises:
        ValueError: If the file is not a flat mapping
    """
    with open(config_path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file {config_path} must contain key: value pairs")
    flat = {}
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise ValueError(f"Config key '{key}' must hold a scalar value")
        flat[str(key).strip().lstrip("-").replace("-", "_")] = value
    return flat
