"""
Base exception classes for the GBM calibration toolkit.

Every error raised by the services carries a machine-readable ``error_type``
and a ``details`` dict so the command line can report it uniformly.
"""

from typing import Any


class BaseServiceError(Exception):
    """Base exception for all service errors."""

    exit_code: int = 1

    def __init__(
        self, message: str, error_type: str, details: dict[str, Any] | None = None
    ):
        super().__init__(message)
        self.error_type = error_type
        self.details = details or {}


class ConfigurationError(BaseServiceError):
    """Raised when a run configuration is incomplete or inconsistent."""

    exit_code = 2

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message, ErrorTypes.CONFIG_ERROR, {"key": key})


class DataFileError(BaseServiceError):
    """Raised when an input file is missing or malformed."""

    exit_code = 2

    def __init__(
        self, message: str, file_path: str, expected_header: str | None = None
    ):
        super().__init__(
            message,
            ErrorTypes.FILE_ERROR,
            {"file_path": file_path, "expected_header": expected_header},
        )


class SolverError(BaseServiceError):
    """Raised when the forward integrator fails."""

    def __init__(
        self,
        message: str,
        failing_time: float | None = None,
        error_type: str = "SOLVER_ERROR",
    ):
        super().__init__(message, error_type, {"failing_time": failing_time})
        self.failing_time = failing_time


class NonFiniteStateError(SolverError):
    """Raised when the state handed to the right-hand side is not finite."""

    def __init__(self, field: str, node: int, time: float | None = None):
        super().__init__(
            f"Non-finite {field} at node {node}",
            failing_time=time,
            error_type=ErrorTypes.NON_FINITE_STATE,
        )
        self.details.update({"field": field, "node": node})
        self.node = node


class NegativeDensityError(SolverError):
    """Raised when a cell density blows up below the admissible floor."""

    def __init__(self, field: str, minimum: float, time: float):
        super().__init__(
            f"Negative {field} density {minimum:.3e} at t={time:.6g}",
            failing_time=time,
            error_type=ErrorTypes.NEGATIVE_DENSITY,
        )
        self.details.update({"field": field, "minimum": minimum})


class FactorizationError(BaseServiceError):
    """Raised when a covariance matrix cannot be factorized."""

    def __init__(self, size: int, jitter: float):
        super().__init__(
            f"Covariance of size {size} not positive definite "
            f"after jitter {jitter:.3e}",
            ErrorTypes.NOT_POSITIVE_DEFINITE,
            {"size": size, "jitter": jitter},
        )


class DesignError(BaseServiceError):
    """Raised when an experiment design cannot be produced."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message, ErrorTypes.DESIGN_ERROR, details)


class PriorError(BaseServiceError):
    """Raised when priors cannot be constructed from the data."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message, ErrorTypes.PRIOR_ERROR, details)


class SamplerError(BaseServiceError):
    """Raised when the ensemble sampler cannot run."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message, ErrorTypes.SAMPLER_ERROR, details)


class SamplerStuckError(SamplerError):
    """Raised when no walker has moved over a full diagnostic window."""

    ADVICE = (
        "The MCMC acceptance ratio is small: the likelihood is negligible over "
        "the explored region and the posterior is controlled by the priors. "
        "Narrow the parameter range (design box) or revise the priors."
    )

    def __init__(self, step: int, window: int):
        super().__init__(
            f"All walkers stuck for {window} steps (at step {step}). {self.ADVICE}",
            {"step": step, "window": window},
        )


class AnalysisError(BaseServiceError):
    """Raised when posterior post-processing cannot complete."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message, ErrorTypes.ANALYSIS_ERROR, details)


class ModeMismatchError(BaseServiceError):
    """Raised when an artifact was produced under a different calibration mode."""

    exit_code = 2

    def __init__(self, expected: str, found: str):
        super().__init__(
            f"Chain was produced in mode {found!r}, expected {expected!r}",
            ErrorTypes.MODE_MISMATCH,
            {"expected": expected, "found": found},
        )


# Common error types for consistency
class ErrorTypes:
    """Common error type constants."""

    CONFIG_ERROR = "CONFIG_ERROR"
    FILE_ERROR = "FILE_ERROR"
    SOLVER_ERROR = "SOLVER_ERROR"
    NON_FINITE_STATE = "NON_FINITE_STATE"
    NEGATIVE_DENSITY = "NEGATIVE_DENSITY"
    NOT_POSITIVE_DEFINITE = "NOT_POSITIVE_DEFINITE"
    DESIGN_ERROR = "DESIGN_ERROR"
    PRIOR_ERROR = "PRIOR_ERROR"
    SAMPLER_ERROR = "SAMPLER_ERROR"
    MODE_MISMATCH = "MODE_MISMATCH"
    ANALYSIS_ERROR = "ANALYSIS_ERROR"
