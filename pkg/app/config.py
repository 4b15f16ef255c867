"""
Configuration settings for the GBM calibration toolkit.

This module handles environment variables, application settings,
and configuration validation using Pydantic Settings.
"""

import psutil
from pydantic import ValidationInfo, field_validator
from pydantic_settings import BaseSettings

from app.utils.validation import ValidationUtils


class Settings(BaseSettings):
    """
    Application settings with environment variable support.

    All settings can be overridden using environment variables
    with the same name (case-insensitive).
    """

    # Application settings
    APP_NAME: str = "GBM progression calibration toolkit"
    VERSION: str = "0.1.0"
    ENVIRONMENT: str = "development"

    # Logging settings
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"

    # Output settings
    OUTPUT_DIR: str = "outputs"

    # Worker settings (None = all logical cores)
    DEFAULT_THREADS: int | None = None

    # Forward solver settings (nondimensional tolerances)
    SOLVER_METHOD: str = "BDF"
    SOLVER_RTOL: float = 1e-6
    SOLVER_ATOL: float = 1e-9

    # Robustness settings
    MAX_FAILURE_FRACTION: float = 0.10
    STUCK_WINDOW: int = 500
    JITTER_RETRIES: int = 6

    @field_validator("ENVIRONMENT")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        """Validate environment setting."""
        allowed_envs = ["development", "staging", "production"]
        if v not in allowed_envs:
            raise ValueError(f"ENVIRONMENT must be one of {allowed_envs}")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level setting."""
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"LOG_LEVEL must be one of {allowed_levels}")
        return v.upper()

    @field_validator("SOLVER_METHOD")
    @classmethod
    def validate_solver_method(cls, v: str) -> str:
        """Only implicit, stiff-capable integrators are accepted."""
        allowed_methods = ["BDF", "Radau", "LSODA"]
        if v not in allowed_methods:
            raise ValueError(f"SOLVER_METHOD must be one of {allowed_methods}")
        return v

    @field_validator("SOLVER_RTOL", "SOLVER_ATOL")
    @classmethod
    def validate_tolerance(cls, v: float) -> float:
        """Validate solver tolerances."""
        if not 0.0 < v < 1.0:
            raise ValueError("Solver tolerances must lie in (0, 1)")
        return v

    @field_validator("MAX_FAILURE_FRACTION")
    @classmethod
    def validate_failure_fraction(cls, v: float) -> float:
        """Validate tolerated failure fraction."""
        return ValidationUtils.validate_fraction(v, "MAX_FAILURE_FRACTION")

    @field_validator("DEFAULT_THREADS", "STUCK_WINDOW", "JITTER_RETRIES")
    @classmethod
    def validate_positive(cls, v: int | None, info: ValidationInfo) -> int | None:
        """Validate positive integer settings."""
        return ValidationUtils.validate_positive_count(v, str(info.field_name))

    class Config:
        """Pydantic configuration."""

        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False


# Create settings instance
settings = Settings()


def resolve_threads(requested: int | None = None) -> int:
    """
    Resolve the worker count for concurrent forward solves.

    Args:
        requested: Explicit thread count, if any

    Returns:
        Number of worker threads (at least 1)
    """
    if requested is not None:
        return max(1, requested)
    if settings.DEFAULT_THREADS is not None:
        return settings.DEFAULT_THREADS
    return max(1, psutil.cpu_count(logical=True) or 1)
