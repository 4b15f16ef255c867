"""
Shared fixtures for the GBM calibration test suite.
"""

from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from app.models.physics import CellProfile, FixedConstants, SpatialGrid
from app.services.solver import ForwardModel
from app.utils.data_io import write_profile


def toy_eta(multipliers: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Cheap smooth stand-in for the forward model, in units of c_sat."""
    m = np.asarray(multipliers, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return (
        0.1 * m[0]
        + 0.05 * m[1] * xi
        + 0.02 * m[2] * xi**2
        + 0.01 * m[3] * np.sin(np.pi * xi)
    )


@pytest.fixture
def consts() -> FixedConstants:
    return FixedConstants()


@pytest.fixture
def small_grid(consts: FixedConstants) -> SpatialGrid:
    return SpatialGrid(n_nodes=21, length=consts.L)


@pytest.fixture
def initial_profile(consts: FixedConstants) -> CellProfile:
    """Gaussian seeding of live cells at the chamber centre."""
    x = np.linspace(0.0, consts.L, 41)
    u = 0.3 * consts.c_sat * np.exp(-(((x - consts.L / 2) / 0.2) ** 2))
    return CellProfile(x=x, u=u)


@pytest.fixture
def observed_profile(consts: FixedConstants) -> CellProfile:
    """Thirty noisy observations generated from the toy model."""
    rng = np.random.default_rng(7)
    x = np.linspace(0.0, consts.L, 30)
    truth = toy_eta(np.ones(4), x / consts.L)
    z = truth + rng.normal(0.0, 0.005, size=x.size)
    return CellProfile(x=x, u=z * consts.c_sat)


@pytest.fixture
def experiment_files(tmp_path, initial_profile, observed_profile) -> dict[str, Path]:
    """Initial and observed profile CSVs in physical units."""
    return {
        "initial": write_profile(
            tmp_path / "initial.csv", initial_profile.x, initial_profile.u
        ),
        "data": write_profile(
            tmp_path / "observed.csv", observed_profile.x, observed_profile.u
        ),
    }


@pytest.fixture
def toy_forward_model():
    """Replace forward solves behind ``ForwardModel.eta_scaled`` with ``toy_eta``."""

    def eta_scaled(self, multipliers, xi):
        return toy_eta(multipliers, xi)

    with patch.object(ForwardModel, "eta_scaled", eta_scaled):
        yield
