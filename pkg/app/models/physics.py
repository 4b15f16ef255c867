"""
Physical model data structures for the GBM progression model.

This module defines the literature-fixed constants, the calibration parameter
vector, its nondimensional image, the spatial grid and the solver state
containers for the 1-D live cell / dead cell / oxygen system.
"""

from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class FixedConstants(BaseModel):
    """Literature-fixed constants of the progression model (physical units)."""

    model_config = ConfigDict(frozen=True)

    D_n: float = Field(6.6e-10, gt=0, description="Pedesis diffusivity [cm^2/s]")
    D_O2: float = Field(1e-5, gt=0, description="Oxygen diffusivity [cm^2/s]")
    tau_d: float = Field(2.0e6, gt=0, description="Death characteristic time [s]")
    alpha: float = Field(
        1.5e-9, gt=0, description="Oxygen consumption rate [mmHg cm/(cell s)]"
    )
    c_sat: float = Field(1.0e6, gt=0, description="Saturation cell density [cell/cm]")
    h2: float = Field(1.4, gt=0, description="Anoxia threshold [mmHg]")
    dh2: float = Field(0.1, gt=0, description="Anoxia sensitivity [mmHg]")
    k_m: float = Field(2.5, gt=0, description="Michaelis-Menten constant [mmHg]")
    w0: float = Field(40.0, gt=0, description="Ambient oxygen [mmHg]")
    L: float = Field(2.0, gt=0, description="Chamber length [cm]")
    T_horizon: float = Field(5.184e5, gt=0, description="Experiment horizon [s]")


class CalibrationParameters(BaseModel):
    """The unknown parameter vector theta = (tau_n, chi, b, j)."""

    model_config = ConfigDict(frozen=True)

    tau_n: float = Field(..., gt=0, description="Proliferation time [s]")
    chi: float = Field(..., gt=0, description="Chemotaxis [cm^2/(mmHg s)]")
    b: float = Field(..., gt=0, description="Inverse hypoxia threshold [1/mmHg]")
    j: float = Field(..., gt=0, description="Boundary flux proportionality [s/cm]")

    NAMES: ClassVar[tuple[str, ...]] = ("tau_n", "chi", "b", "j")

    @property
    def h1(self) -> float:
        """Hypoxia threshold [mmHg]."""
        return 1.0 / self.b

    def as_array(self) -> np.ndarray:
        """Return (tau_n, chi, b, j) as a float array."""
        return np.array([self.tau_n, self.chi, self.b, self.j], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray | list[float]) -> "CalibrationParameters":
        """Build parameters from a (tau_n, chi, b, j) sequence."""
        tau_n, chi, b, j = (float(v) for v in values)
        return cls(tau_n=tau_n, chi=chi, b=b, j=j)


@dataclass(frozen=True)
class ScaledParameters:
    """
    Dimensionless groups consumed by the solver.

    Scales: x/L, t/T, u/c_sat, v/c_sat, w/w0. Rates may be zero (null
    dynamics); ``j == 0`` selects the homogeneous Dirichlet limit for u.
    """

    D_n: float
    chi: float
    rho_n: float
    rho_d: float
    D_O2: float
    alpha: float
    b: float
    j: float
    h2: float
    dh2: float
    k_m: float

    def calibration_groups(self) -> np.ndarray:
        """The four calibrated groups (rho_n, chi, b, j)."""
        return np.array([self.rho_n, self.chi, self.b, self.j], dtype=float)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform node grid on [0, L]."""

    n_nodes: int = 100
    length: float = 2.0

    def __post_init__(self) -> None:
        if self.n_nodes < 3:
            raise ValueError("SpatialGrid needs at least 3 nodes")
        if self.length <= 0:
            raise ValueError("SpatialGrid length must be positive")

    @property
    def x(self) -> np.ndarray:
        """Node coordinates [cm]."""
        return np.linspace(0.0, self.length, self.n_nodes)

    @property
    def xi(self) -> np.ndarray:
        """Nondimensional node coordinates on [0, 1]."""
        return np.linspace(0.0, 1.0, self.n_nodes)

    @property
    def spacing(self) -> float:
        """Nondimensional node spacing."""
        return 1.0 / (self.n_nodes - 1)


@dataclass(frozen=True)
class CellProfile:
    """A sampled density profile (x in cm, u in cell/cm)."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if x.shape != u.shape or x.ndim != 1:
            raise ValueError("CellProfile x and u must be 1-D arrays of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    def __len__(self) -> int:
        return int(self.x.size)

    def within(self, length: float, tol: float = 1e-12) -> bool:
        """Whether every sample lies in [0, length]."""
        return bool(np.all(self.x >= -tol) and np.all(self.x <= length + tol))

    def on(self, x_query: np.ndarray) -> np.ndarray:
        """Linear interpolation of u at ``x_query``."""
        order = np.argsort(self.x, kind="stable")
        return np.interp(x_query, self.x[order], self.u[order])


@dataclass(frozen=True)
class StateSnapshot:
    """Solver state at one output time (physical units)."""

    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Output snapshots of a forward solve, rows indexed by output time."""

    times: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    stats: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.times.size)

    def snapshot(self, index: int) -> StateSnapshot:
        """Return the snapshot at output index ``index``."""
        return StateSnapshot(
            t=float(self.times[index]),
            u=self.u[index].copy(),
            v=self.v[index].copy(),
            w=self.w[index].copy(),
        )

    def final(self) -> StateSnapshot:
        """Return the snapshot at the horizon."""
        return self.snapshot(-1)


def reference_parameters() -> CalibrationParameters:
    """Reference theta used as the centre of the design box."""
    return CalibrationParameters(tau_n=7.5e5, chi=7.5e-9, b=0.14, j=1.0e6)


# Published MAP estimates, kept for comparison tables.
PUBLISHED_ESTIMATES: dict[str, CalibrationParameters] = {
    "reference": reference_parameters(),
    "bi": CalibrationParameters(tau_n=6.5e5, chi=20e-9, b=0.14, j=2.1e6),
    "bcd": CalibrationParameters(tau_n=6.1e5, chi=5.8e-9, b=0.16, j=0.6e6),
}
