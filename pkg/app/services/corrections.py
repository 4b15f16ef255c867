"""
Correction functions of the go-or-grow progression model.

Saturation factors for growth and migration, the piecewise linear go-or-grow
switch, the anoxia death activation and Michaelis-Menten consumption. All
functions are elementwise and accept scalars or numpy arrays.
"""

import numpy as np
from numpy.typing import ArrayLike


def growth_saturation(u: ArrayLike, v: ArrayLike, c_sat: float) -> np.ndarray:
    """F_gr = 1 - (u + v) / c_sat (unclamped)."""
    return 1.0 - (np.asarray(u, dtype=float) + np.asarray(v, dtype=float)) / c_sat


def migration_saturation(u: ArrayLike, c_sat: float) -> np.ndarray:
    """F_go = 1 - u / c_sat (unclamped)."""
    return 1.0 - np.asarray(u, dtype=float) / c_sat


def pi_grow(w: ArrayLike, b: float) -> np.ndarray:
    """Proliferative activation min(w b, 1)."""
    return np.minimum(np.asarray(w, dtype=float) * b, 1.0)


def pi_go(w: ArrayLike, b: float) -> np.ndarray:
    """Migratory activation max(1 - w b, 0)."""
    return np.maximum(1.0 - np.asarray(w, dtype=float) * b, 0.0)


def pi_death(w: ArrayLike, h2: float, dh2: float) -> np.ndarray:
    """
    Anoxia death activation.

    Args:
        w: Oxygen level
        h2: Anoxia threshold
        dh2: Anoxia sensitivity (must be positive)

    Returns:
        0.5 * (1 - tanh((w - h2) / dh2)), in (0, 1)
    """
    return 0.5 * (1.0 - np.tanh((np.asarray(w, dtype=float) - h2) / dh2))


def pi_consumption(w: ArrayLike, k_m: float) -> np.ndarray:
    """Michaelis-Menten factor w / (w + k_m)."""
    w_arr = np.asarray(w, dtype=float)
    return w_arr / (w_arr + k_m)
