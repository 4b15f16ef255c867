"""
Result models: MCMC chains, posterior summaries and predictive products.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator


@dataclass
class Chain:
    """Retained ensemble MCMC output in sampler coordinates."""

    samples: np.ndarray
    log_post: np.ndarray
    acceptance: np.ndarray
    param_names: list[str]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        self.log_post = np.asarray(self.log_post, dtype=float)
        self.acceptance = np.asarray(self.acceptance, dtype=float)
        if self.samples.ndim != 3:
            raise ValueError("Chain samples must be (n_steps, n_walkers, n_params)")
        if self.log_post.shape != self.samples.shape[:2]:
            raise ValueError("Chain log_post must be (n_steps, n_walkers)")
        if self.acceptance.shape != (self.samples.shape[1],):
            raise ValueError("Chain acceptance must have one entry per walker")
        if len(self.param_names) != self.samples.shape[2]:
            raise ValueError("Chain needs one parameter name per column")

    @property
    def n_steps(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_walkers(self) -> int:
        return int(self.samples.shape[1])

    @property
    def n_params(self) -> int:
        return int(self.samples.shape[2])

    @property
    def mode(self) -> str | None:
        return self.meta.get("mode")

    def flat_samples(self) -> np.ndarray:
        """Samples flattened to (n_steps * n_walkers, n_params), step-major."""
        return self.samples.reshape(-1, self.n_params)

    def flat_log_post(self) -> np.ndarray:
        return self.log_post.reshape(-1)

    def last_positions(self) -> np.ndarray:
        """Walker positions at the final retained step."""
        return self.samples[-1].copy()


class ParameterSummary(BaseModel):
    """Marginal summary of one parameter."""

    name: str
    map: float
    mean: float
    median: float
    lower: float = Field(..., description="2.5% quantile")
    upper: float = Field(..., description="97.5% quantile")

    @model_validator(mode="after")
    def validate_order(self) -> "ParameterSummary":
        if not self.lower <= self.median <= self.upper:
            raise ValueError("Credible interval must bracket the median")
        return self


class PosteriorSummary(BaseModel):
    """Posterior summary of a chain."""

    parameters: list[ParameterSummary]
    correlation: list[list[float]]
    map_index: int
    map_log_post: float
    n_samples: int
    acceptance_mean: float
    r_hat: list[float] = Field(default_factory=list)

    def by_name(self) -> dict[str, ParameterSummary]:
        return {p.name: p for p in self.parameters}

    def map_vector(self) -> np.ndarray:
        return np.array([p.map for p in self.parameters])

    def mean_vector(self) -> np.ndarray:
        return np.array([p.mean for p in self.parameters])


@dataclass(frozen=True)
class PredictiveBand:
    """Monte-Carlo predictive band mean +/- 2 sd."""

    x: np.ndarray
    mean: np.ndarray
    sd: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.mean - 2.0 * self.sd

    @property
    def upper(self) -> np.ndarray:
        return self.mean + 2.0 * self.sd


@dataclass(frozen=True)
class GPCurve:
    """Posterior mean and standard deviation of a GP at query points."""

    x: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
