"""
Utilities package for the GBM calibration toolkit.

This package contains filesystem helpers, file-format readers and writers,
and shared validation.
"""

from .fs import ensure_directory, read_json, write_json, write_text
from .validation import ValidationUtils

__all__ = [
    "ensure_directory",
    "read_json",
    "write_json",
    "write_text",
    "ValidationUtils",
]
