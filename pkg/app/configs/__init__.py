"""
Configuration package for the GBM calibration toolkit.

This package contains the per-run configuration of the command-line
workflow.
"""

from .run import Preset, RunConfig

__all__ = [
    "Preset",
    "RunConfig",
]
