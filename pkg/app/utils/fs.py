"""
Filesystem utilities for run artifacts.

Writes go through a temporary file in the target directory followed by an
atomic rename, so an interrupted run never leaves a half-written artifact.
"""

import json
import os
import tempfile
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger


def ensure_directory(path: str | Path) -> Path:
    """
    Ensure directory exists, creating it if necessary.

    Args:
        path: Directory path to ensure

    Returns:
        Path object of the directory

    Raises:
        OSError: If directory cannot be created
    """
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Directory ensured: {path}")
        return path
    except OSError as exc:
        logger.error(f"Failed to create directory {path}: {exc}")
        raise


def _jsonable(value: Any) -> Any:
    """json.dumps fallback for numpy scalars, arrays, paths and enums."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value"):
        return value.value
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(data: Any) -> str:
    """Deterministic JSON text (sorted keys, 2-space indent)."""
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable)


def atomic_write(path: str | Path, writer: Callable[[Path], None]) -> Path:
    """
    Run ``writer`` against a temporary sibling of ``path``, then rename.

    Args:
        path: Final destination
        writer: Callable that writes the complete file at the given path

    Returns:
        The destination path
    """
    path = Path(path)
    ensure_directory(path.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    tmp = Path(tmp_name)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except Exception:
        tmp.unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_text(path: str | Path, text: str) -> Path:
    return atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def write_json(path: str | Path, data: Any) -> Path:
    """Write ``data`` as deterministic JSON."""
    return write_text(path, to_json(data) + "\n")


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
