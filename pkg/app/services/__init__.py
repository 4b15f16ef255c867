"""
Services package for the GBM calibration toolkit.

This package contains the forward solver, Gaussian-process machinery,
experimental design, posterior construction, the ensemble sampler,
post-processing and the command pipeline.
"""

from .calibration import CalibrationData, CalibrationPosterior, ParameterLayout
from .pipeline import CalibrationPipeline
from .sampler import run_ensemble
from .solver import ForwardModel, solve_forward

__all__ = [
    # Forward model
    "ForwardModel",
    "solve_forward",
    # Calibration
    "CalibrationData",
    "CalibrationPosterior",
    "ParameterLayout",
    # Sampling
    "run_ensemble",
    # Orchestration
    "CalibrationPipeline",
]
