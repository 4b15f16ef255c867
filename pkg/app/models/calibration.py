"""
Calibration models: modes, priors, noise and Gaussian-process hyperparameters.
"""

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from app.models.data import DesignBox


class CalibrationMode(str, Enum):
    """The four calibration procedures."""

    BI = "bi"
    BCE = "bce"
    BCD = "bcd"
    BCED = "bced"

    @property
    def uses_surrogate(self) -> bool:
        return self in (CalibrationMode.BCE, CalibrationMode.BCED)

    @property
    def uses_discrepancy(self) -> bool:
        return self in (CalibrationMode.BCD, CalibrationMode.BCED)

    @property
    def uses_forward_model(self) -> bool:
        return not self.uses_surrogate


class GammaPrior(BaseModel):
    """Gamma(shape, rate) prior on a positive scale parameter."""

    model_config = ConfigDict(frozen=True)

    shape: float = Field(..., gt=0)
    rate: float = Field(..., gt=0)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.shape) / self.rate)

    @property
    def mode(self) -> float:
        return max(self.shape - 1.0, 0.0) / self.rate

    @classmethod
    def from_mean_sd(cls, mean: float, sd: float) -> "GammaPrior":
        """Moment-matched Gamma prior."""
        shape = (mean / sd) ** 2
        return cls(shape=shape, rate=shape / mean)

    def logpdf(self, value: float) -> float:
        if value <= 0:
            return -np.inf
        return float(stats.gamma.logpdf(value, a=self.shape, scale=1.0 / self.rate))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)


class PriorSet(BaseModel):
    """Independent priors for every sampled quantity of one mode."""

    mode: CalibrationMode
    theta_box: DesignBox = Field(default_factory=DesignBox)
    scales: dict[str, GammaPrior] = Field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.scales)


class NoiseModel(BaseModel):
    """Gaussian experimental error."""

    sigma: float = Field(..., gt=0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` independent errors."""
        return rng.normal(0.0, self.sigma, size=size)


class SEKernel(BaseModel):
    """Squared exponential kernel lambda * exp(-r^2 / (2 beta^2))."""

    model_config = ConfigDict(frozen=True)

    lam: float = Field(..., gt=0, description="Signal variance")
    beta: float = Field(..., gt=0, description="Lengthscale")


class SurrogateHypers(BaseModel):
    """Hyperparameters of the joint (x, theta) surrogate kernel."""

    model_config = ConfigDict(frozen=True)

    beta_x: float = Field(..., gt=0)
    beta_theta: float = Field(..., gt=0)
    lambda_x: float = Field(..., gt=0)


class DiscrepancyHypers(BaseModel):
    """Hyperparameters of the discrepancy kernel over x."""

    model_config = ConfigDict(frozen=True)

    beta_d: float = Field(..., gt=0)
    lambda_d: float = Field(..., gt=0)

    def kernel(self) -> SEKernel:
        return SEKernel(lam=self.lambda_d, beta=self.beta_d)
