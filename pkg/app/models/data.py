"""
Dataset models for calibration.

Experimental data are kept in physical units; synthetic surrogate-training
records are kept in nondimensional form (x/L, parameter multipliers, u/c_sat).
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.physics import CellProfile, FixedConstants


class DesignBox(BaseModel):
    """Per-dimension sampling bounds for the parameter multipliers."""

    model_config = ConfigDict(frozen=True)

    lower: list[float] = Field(default_factory=lambda: [0.1] * 4)
    upper: list[float] = Field(default_factory=lambda: [6.0] * 4)

    @model_validator(mode="after")
    def validate_bounds(self) -> "DesignBox":
        """Validate that bounds are paired, positive and ordered."""
        if len(self.lower) != len(self.upper):
            raise ValueError("DesignBox lower and upper must have equal length")
        for lo, hi in zip(self.lower, self.upper, strict=True):
            if not lo < hi:
                raise ValueError(f"DesignBox requires lower < upper, got {lo} >= {hi}")
            if lo <= 0:
                raise ValueError("DesignBox multipliers must be positive")
        return self

    @property
    def dims(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of ``points`` inside the closed box."""
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def scale_unit(self, unit: np.ndarray) -> np.ndarray:
        """Map points of [0, 1]^d into the box."""
        return self.lo + np.atleast_2d(unit) * (self.hi - self.lo)


@dataclass(frozen=True)
class ExperimentalDataset:
    """Initial profiles plus M observed (x_i, z_i) pairs at the horizon."""

    u0: CellProfile
    observed: CellProfile
    v0: CellProfile | None = None
    w0: float | None = None

    def __len__(self) -> int:
        return len(self.observed)

    @property
    def x(self) -> np.ndarray:
        return self.observed.x

    @property
    def z(self) -> np.ndarray:
        return self.observed.u

    def scaled_x(self, consts: FixedConstants) -> np.ndarray:
        """Observation coordinates as x/L."""
        return self.observed.x / consts.L

    def scaled_z(self, consts: FixedConstants) -> np.ndarray:
        """Observations as u/c_sat."""
        return self.observed.u / consts.c_sat

    def subset(self, indices: np.ndarray | list[int]) -> "ExperimentalDataset":
        """Dataset restricted to the given observation indices (order kept)."""
        idx = np.asarray(indices, dtype=int)
        return ExperimentalDataset(
            u0=self.u0,
            observed=CellProfile(x=self.observed.x[idx], u=self.observed.u[idx]),
            v0=self.v0,
            w0=self.w0,
        )


@dataclass(frozen=True)
class SyntheticDataset:
    """Surrogate-training records (x~, theta~, y) from forward-model runs."""

    x: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).reshape(-1)
        theta = np.asarray(self.theta, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if theta.ndim != 2 or theta.shape[0] != x.size:
            raise ValueError("SyntheticDataset theta must be (n_records, n_params)")
        if y.size != x.size:
            raise ValueError("SyntheticDataset x and y must have equal length")
        if not np.all(np.isfinite(y)):
            raise ValueError("SyntheticDataset outputs must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.x.size)

    @property
    def inputs(self) -> np.ndarray:
        """Stacked (x~, theta~) rows for the joint kernel."""
        return np.column_stack([self.x, self.theta])

    @classmethod
    def empty(cls, n_params: int = 4) -> "SyntheticDataset":
        return cls(x=np.zeros(0), theta=np.zeros((0, n_params)), y=np.zeros(0))
