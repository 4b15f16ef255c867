"""
Gaussian-process machinery shared by the surrogate and the discrepancy.

Zero-mean GPs with squared exponential covariances, jittered Cholesky
factorization, log marginal likelihood and posterior conditionals. All inputs
are expected in nondimensional form.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from app.config import settings
from app.exceptions import FactorizationError
from app.models.calibration import SEKernel, SurrogateHypers

LOG_2PI = float(np.log(2.0 * np.pi))


class Kernel(Protocol):
    """Covariance function usable both pairwise and on input matrices."""

    def __call__(self, a: Any, b: Any) -> float: ...

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray: ...

    @property
    def variance(self) -> float: ...


def _rows(inputs: np.ndarray | Sequence[Any]) -> np.ndarray:
    arr = np.asarray(inputs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def kernel_se(a: Any, b: Any, k: SEKernel) -> float:
    """lambda * exp(-|a - b|^2 / (2 beta^2)) for two input vectors."""
    diff = np.atleast_1d(np.asarray(a, dtype=float)) - np.atleast_1d(
        np.asarray(b, dtype=float)
    )
    return float(k.lam * np.exp(-float(diff @ diff) / (2.0 * k.beta**2)))


def kernel_joint(p: tuple[Any, Any], q: tuple[Any, Any], h: SurrogateHypers) -> float:
    """
    Product SE kernel over (x, theta) pairs.

    Args:
        p: (x, theta) input pair
        q: (x, theta) input pair
        h: Surrogate hyperparameters (beta_x, beta_theta, lambda_x)

    Returns:
        lambda_x * exp(-|dx|^2 / 2 beta_x^2) * exp(-|dtheta|^2 / 2 beta_theta^2)
    """
    kx = kernel_se(p[0], q[0], SEKernel(lam=h.lambda_x, beta=h.beta_x))
    kt = kernel_se(p[1], q[1], SEKernel(lam=1.0, beta=h.beta_theta))
    return kx * kt


def se_matrix(A: np.ndarray, B: np.ndarray, lam: float, beta: float) -> np.ndarray:
    """Vectorized SE cross-covariance between the rows of A and B."""
    sq = cdist(_rows(A), _rows(B), metric="sqeuclidean")
    return lam * np.exp(-sq / (2.0 * beta**2))


@dataclass(frozen=True)
class SquaredExponential:
    """Isotropic SE covariance over one input block."""

    params: SEKernel

    @property
    def variance(self) -> float:
        return self.params.lam

    def __call__(self, a: Any, b: Any) -> float:
        return kernel_se(a, b, self.params)

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return se_matrix(A, B, self.params.lam, self.params.beta)


@dataclass(frozen=True)
class JointKernel:
    """Product SE covariance over stacked rows [x, theta_1, ..., theta_p]."""

    hypers: SurrogateHypers

    @property
    def variance(self) -> float:
        return self.hypers.lambda_x

    def __call__(self, a: Any, b: Any) -> float:
        a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return kernel_joint((a_arr[:1], a_arr[1:]), (b_arr[:1], b_arr[1:]), self.hypers)

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A, B = _rows(A), _rows(B)
        h = self.hypers
        return se_matrix(A[:, :1], B[:, :1], h.lambda_x, h.beta_x) * se_matrix(
            A[:, 1:], B[:, 1:], 1.0, h.beta_theta
        )


def build_cov(
    inputs: np.ndarray | Sequence[Any],
    kernel: Kernel | Callable[[Any, Any], float],
    nugget: float | np.ndarray = 0.0,
) -> np.ndarray:
    """
    Assemble a symmetric covariance matrix with a diagonal nugget.

    Args:
        inputs: Input points (rows)
        kernel: Pairwise covariance; a ``matrix`` method is used when present
        nugget: Scalar or per-element diagonal variance (nonnegative)

    Returns:
        K[i, j] = kernel(inputs[i], inputs[j]) + nugget on the diagonal
    """
    nug = np.asarray(nugget, dtype=float)
    if np.any(nug < 0):
        raise ValueError("Nugget must be nonnegative")
    rows = list(inputs) if not isinstance(inputs, np.ndarray) else inputs
    n = len(rows)
    matrix_fn = getattr(kernel, "matrix", None)
    if matrix_fn is not None:
        K = matrix_fn(np.asarray(rows, dtype=float), np.asarray(rows, dtype=float))
    else:
        K = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                K[i, j] = K[j, i] = kernel(rows[i], rows[j])
    K = 0.5 * (K + K.T)
    K[np.diag_indices(n)] += nug
    return K


def chol_jitter(
    K: np.ndarray, max_retries: int | None = None
) -> tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of K, adding escalating jitter when needed.

    Jitter starts at 1e-10 * mean(diag K) and grows tenfold per retry.

    Returns:
        (L, jitter) with L @ L.T = K + jitter * I

    Raises:
        FactorizationError: If K is not positive definite after all retries
    """
    retries = settings.JITTER_RETRIES if max_retries is None else max_retries
    K = np.asarray(K, dtype=float)
    try:
        return cholesky(K, lower=True, check_finite=True), 0.0
    except (LinAlgError, ValueError):
        pass

    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    base = 1e-10 * (scale if scale > 0 else 1.0)
    jitter = base
    eye = np.eye(K.shape[0])
    for attempt in range(retries):
        jitter = base * 10.0**attempt
        try:
            factor = cholesky(K + jitter * eye, lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            continue
        logger.debug(f"Cholesky succeeded with jitter {jitter:.3e}")
        return factor, jitter
    raise FactorizationError(K.shape[0], jitter)


def log_marginal_from_factor(y: np.ndarray, L: np.ndarray) -> float:
    """Zero-mean Gaussian log density of y given the Cholesky factor of K."""
    alpha = solve_triangular(L, y, lower=True)
    n = y.size
    return float(
        -0.5 * alpha @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    )


def gp_log_marginal(y: np.ndarray, K: np.ndarray) -> float:
    """
    Log marginal likelihood of a zero-mean GP.

    Returns:
        -1/2 y^T K^-1 y - 1/2 log det K - n/2 log 2 pi

    Raises:
        ValueError: If dimensions disagree
        FactorizationError: If K cannot be factorized
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if K.shape != (y.size, y.size):
        raise ValueError("Covariance shape does not match outputs")
    L, _ = chol_jitter(K)
    return log_marginal_from_factor(y, L)


def gp_posterior(
    train_in: np.ndarray,
    train_y: np.ndarray,
    kernel: Kernel,
    noise: float | np.ndarray,
    test_in: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Posterior mean and covariance of a zero-mean GP at ``test_in``.

    Args:
        train_in: Training inputs (rows)
        train_y: Training outputs
        kernel: Covariance function
        noise: Observation noise variance (scalar or per training point)
        test_in: Test inputs (rows)

    Returns:
        (mean, cov) with mean = K*^T (K + N)^-1 y and
        cov = K** - K*^T (K + N)^-1 K*
    """
    K = build_cov(train_in, kernel, noise)
    K_star = kernel.matrix(_rows(train_in), _rows(test_in))
    K_ss = kernel.matrix(_rows(test_in), _rows(test_in))
    return condition(K, K_star, K_ss, train_y)


def condition(
    K: np.ndarray, K_star: np.ndarray, K_ss: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Gaussian conditional given a full training covariance.

    Args:
        K: Training covariance including noise, (n, n)
        K_star: Training-test cross covariance, (n, m)
        K_ss: Test covariance, (m, m)
        y: Training outputs

    Returns:
        (mean, cov) of the test block
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    L, _ = chol_jitter(K)
    alpha = cho_solve((L, True), y)
    mean = K_star.T @ alpha
    v = solve_triangular(L, K_star, lower=True)
    cov = K_ss - v.T @ v
    return mean, 0.5 * (cov + cov.T)


def gp_predict_sd(cov: np.ndarray) -> np.ndarray:
    """Pointwise standard deviation from a posterior covariance."""
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


@dataclass(frozen=True)
class Standardizer:
    """Affine output map y -> (y - mean) / sd, recorded for exact inversion."""

    mean: float
    sd: float

    @classmethod
    def from_data(cls, values: np.ndarray) -> "Standardizer":
        values = np.asarray(values, dtype=float)
        sd = float(np.std(values, ddof=1)) if values.size > 1 else 1.0
        return cls(mean=float(np.mean(values)), sd=sd if sd > 0 else 1.0)

    @classmethod
    def identity(cls) -> "Standardizer":
        return cls(mean=0.0, sd=1.0)

    def forward(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.sd + self.mean

    def inverse_scale(self, spread: np.ndarray | float) -> np.ndarray:
        return np.asarray(spread, dtype=float) * self.sd

    def to_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "sd": self.sd}
