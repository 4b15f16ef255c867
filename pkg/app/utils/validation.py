"""
Shared validation utilities for run configuration.

This module provides common validation functions to avoid duplication
across the configuration and model classes.
"""


class ValidationUtils:
    """Shared validation utilities for common validation patterns."""

    @staticmethod
    def validate_positive_count(value: int | None, name: str) -> int | None:
        """
        Validate an optional count.

        Args:
            value: Count, or None when unset
            name: Field name used in the error message

        Returns:
            Validated count

        Raises:
            ValueError: If the count is not positive
        """
        if value is not None and value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
        return value

    @staticmethod
    def validate_fraction(value: float, name: str, allow_one: bool = False) -> float:
        """
        Validate a fraction in [0, 1) (or [0, 1] with ``allow_one``).

        Raises:
            ValueError: If the value is out of range
        """
        upper_ok = value <= 1.0 if allow_one else value < 1.0
        if not (value >= 0.0 and upper_ok):
            bound = "]" if allow_one else ")"
            raise ValueError(f"{name} must lie in [0, 1{bound}, got {value}")
        return value
