"""
Priors, likelihoods and posteriors for the four calibration modes.

BI compares observations directly with the forward model. BCD adds a GP
discrepancy over x. BCE replaces the forward model by a GP surrogate over
(x, theta) trained jointly on synthetic records. BCED combines surrogate and
discrepancy. Everything here works in nondimensional units; the GP modes
additionally standardize outputs with the empirical mean and sd of z.
"""

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.spatial.distance import pdist

from app.exceptions import (
    BaseServiceError,
    ConfigurationError,
    FactorizationError,
    ModeMismatchError,
    PriorError,
)
from app.models.calibration import (
    CalibrationMode,
    DiscrepancyHypers,
    GammaPrior,
    PriorSet,
    SurrogateHypers,
)
from app.models.data import DesignBox, ExperimentalDataset, SyntheticDataset
from app.models.physics import CalibrationParameters, FixedConstants
from app.models.results import GPCurve
from app.services.gp import (
    LOG_2PI,
    JointKernel,
    Standardizer,
    condition,
    gp_log_marginal,
    gp_predict_sd,
    se_matrix,
)

# Evaluates eta / c_sat at nondimensional x for a multiplier vector.
EtaFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

THETA_NAMES: tuple[str, ...] = CalibrationParameters.NAMES
SURROGATE_NAMES: tuple[str, ...] = ("beta_x", "beta_theta", "lambda_x")
DISCREPANCY_NAMES: tuple[str, ...] = ("beta_d", "lambda_d")

# Diagonal nugget on synthetic rows, relative to lambda_x.
SYNTHETIC_NUGGET = 1e-8

# Gamma shape shared by lengthscale and variance priors.
HYPER_SHAPE = 5.0

# sigma prior: mean 0.1 * mean|z|, sd a tenth of that mean.
NOISE_PRIOR_FRACTION = 0.1
NOISE_PRIOR_RELATIVE_SD = 0.1

# tau_n is the inverse of its rate group; the others scale linearly.
_PHYSICAL_EXPONENTS = np.array([-1.0, 1.0, 1.0, 1.0])


def physical_theta(
    multipliers: np.ndarray, reference: CalibrationParameters
) -> np.ndarray:
    """Physical (tau_n, chi, b, j) for multiplier rows of any leading shape."""
    m = np.asarray(multipliers, dtype=float)
    return reference.as_array() * m**_PHYSICAL_EXPONENTS


def mode_requirements(mode: CalibrationMode) -> frozenset[str]:
    """Inputs a mode needs besides the experimental data."""
    required = {"synthetic"} if mode.uses_surrogate else {"model"}
    return frozenset(required)


@dataclass(frozen=True)
class ParameterLayout:
    """
    Packing order of one mode's parameter vector.

    Sampler coordinates hold theta as multipliers of the reference groups and
    every positive scale parameter (beta, lambda, sigma) as its logarithm.
    """

    mode: CalibrationMode

    @property
    def n_theta(self) -> int:
        return len(THETA_NAMES)

    @property
    def scale_names(self) -> tuple[str, ...]:
        names: tuple[str, ...] = ()
        if self.mode.uses_surrogate:
            names += SURROGATE_NAMES
        if self.mode.uses_discrepancy:
            names += DISCREPANCY_NAMES
        return names + ("sigma",)

    @property
    def names(self) -> tuple[str, ...]:
        return THETA_NAMES + self.scale_names

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def log_flags(self) -> np.ndarray:
        flags = np.ones(self.dim, dtype=bool)
        flags[: self.n_theta] = False
        return flags

    def pack(self, theta: np.ndarray, scales: Mapping[str, float]) -> np.ndarray:
        """Sampler-coordinate vector from multipliers and natural scales."""
        missing = [name for name in self.scale_names if name not in scales]
        if missing:
            raise ValueError(f"Missing scale parameters: {missing}")
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.n_theta:
            raise ValueError(f"Expected {self.n_theta} multipliers, got {theta.size}")
        logs = [np.log(scales[name]) for name in self.scale_names]
        return np.concatenate([theta, np.asarray(logs, dtype=float)])

    def unpack(self, vector: np.ndarray) -> tuple[np.ndarray, dict[str, float]]:
        """Multipliers and natural scales from a sampler-coordinate vector."""
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size != self.dim:
            raise ValueError(
                f"Mode {self.mode.value} expects {self.dim} parameters, got {vector.size}"
            )
        theta = vector[: self.n_theta]
        scales = {
            name: float(np.exp(value))
            for name, value in zip(self.scale_names, vector[self.n_theta :], strict=True)
        }
        return theta, scales

    def natural(self, vector: np.ndarray) -> np.ndarray:
        """Multipliers followed by exponentiated scales, as one vector."""
        theta, scales = self.unpack(vector)
        return np.concatenate([theta, list(scales.values())])

    def to_natural(
        self, samples: np.ndarray, reference: CalibrationParameters | None = None
    ) -> np.ndarray:
        """
        Convert sampler coordinates to reporting units.

        Args:
            samples: Array whose last axis is the packed parameter vector
            reference: When given, theta multipliers become physical values

        Returns:
            Array of the same shape
        """
        out = np.array(samples, dtype=float, copy=True)
        out[..., self.log_flags] = np.exp(out[..., self.log_flags])
        if reference is not None:
            out[..., : self.n_theta] = physical_theta(out[..., : self.n_theta], reference)
        return out


@dataclass(frozen=True)
class CalibrationData:
    """Experimental observations in nondimensional form plus output scaling."""

    xi: np.ndarray
    z: np.ndarray
    standardizer: Standardizer

    def __post_init__(self) -> None:
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if xi.size != z.size:
            raise ValueError("CalibrationData xi and z must have equal length")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return int(self.xi.size)

    @classmethod
    def from_experiment(
        cls, data: ExperimentalDataset, consts: FixedConstants, mode: CalibrationMode
    ) -> "CalibrationData":
        """Scale a dataset; GP modes standardize z, BI keeps it raw."""
        z = data.scaled_z(consts)
        if mode is CalibrationMode.BI:
            standardizer = Standardizer.identity()
        else:
            standardizer = Standardizer.from_data(z)
        return cls(xi=data.scaled_x(consts), z=z, standardizer=standardizer)

    @property
    def standardized_z(self) -> np.ndarray:
        return self.standardizer.forward(self.z)


def default_priors(
    data: CalibrationData,
    synth: SyntheticDataset | None,
    mode: CalibrationMode,
    box: DesignBox | None = None,
) -> PriorSet:
    """
    Empirical default priors for one mode.

    Lengthscales get Gamma(5, 5/d) with d the mean pairwise distance of the
    relevant inputs, variances Gamma(5, 5/s) with s the sd of the
    standardized responses, and sigma a Gamma with mean 0.1 * mean|z| over the
    raw responses, rescaled to standardized units, and a relative sd of 0.1.
    Theta is uniform over the box.

    Raises:
        PriorError: If fewer than 2 observations (or synthetic records for
            surrogate modes) are available, or distances degenerate
    """
    if len(data) < 2:
        raise PriorError(
            "At least 2 experimental points are needed to form pairwise distances",
            {"points": len(data)},
        )
    d_bar = float(np.mean(pdist(data.xi[:, None])))
    if d_bar <= 0:
        raise PriorError("Experimental x coordinates all coincide")

    y_bar = float(np.mean(np.abs(data.z)))
    if y_bar <= 0:
        raise PriorError("Observations are identically zero; cannot scale sigma prior")
    s = float(np.std(data.standardized_z, ddof=1))
    if s <= 0:
        s = 1.0

    candidates: dict[str, GammaPrior] = {
        "beta_x": GammaPrior(shape=HYPER_SHAPE, rate=HYPER_SHAPE / d_bar),
        "lambda_x": GammaPrior(shape=HYPER_SHAPE, rate=HYPER_SHAPE / s),
        "beta_d": GammaPrior(shape=HYPER_SHAPE, rate=HYPER_SHAPE / d_bar),
        "lambda_d": GammaPrior(shape=HYPER_SHAPE, rate=HYPER_SHAPE / s),
    }
    # mean|z| is taken on raw data, sigma lives in standardized units
    noise_mean = NOISE_PRIOR_FRACTION * y_bar / data.standardizer.sd
    candidates["sigma"] = GammaPrior.from_mean_sd(
        noise_mean, NOISE_PRIOR_RELATIVE_SD * noise_mean
    )

    if mode.uses_surrogate:
        if synth is None or len(synth) < 2:
            raise PriorError(
                f"Mode {mode.value} needs at least 2 synthetic records",
                {"records": 0 if synth is None else len(synth)},
            )
        d_theta = float(np.mean(pdist(synth.theta)))
        if d_theta <= 0:
            raise PriorError("Synthetic parameter draws all coincide")
        candidates["beta_theta"] = GammaPrior(
            shape=HYPER_SHAPE, rate=HYPER_SHAPE / d_theta
        )

    layout = ParameterLayout(mode)
    scales = {name: candidates[name] for name in layout.scale_names}
    logger.debug(
        f"Default priors for {mode.value}: d_bar={d_bar:.4g}, y_bar={y_bar:.4g}"
    )
    return PriorSet(mode=mode, theta_box=box or DesignBox(), scales=scales)


def log_prior(params: np.ndarray, priors: PriorSet) -> float:
    """
    Sum of independent prior log densities at natural-unit parameters.

    Args:
        params: Multipliers followed by scale parameters in layout order
        priors: Priors of the active mode

    Returns:
        Log density, or -inf outside the box or for nonpositive scales
    """
    layout = ParameterLayout(priors.mode)
    params = np.asarray(params, dtype=float).reshape(-1)
    if params.size != layout.dim:
        raise ValueError(
            f"Mode {priors.mode.value} expects {layout.dim} parameters, got {params.size}"
        )
    if not np.all(np.isfinite(params)):
        return -np.inf
    box = priors.theta_box
    theta = params[: layout.n_theta]
    if not bool(box.contains(theta)[0]):
        return -np.inf

    total = -float(np.sum(np.log(box.hi - box.lo)))
    for name, value in zip(layout.scale_names, params[layout.n_theta :], strict=True):
        total += priors.scales[name].logpdf(float(value))
        if not np.isfinite(total):
            return -np.inf
    return total


def _reject(kind: str, exc: Exception) -> float:
    logger.warning(f"{kind} likelihood rejected: {exc}")
    return -np.inf


def _residuals(theta: np.ndarray, data: CalibrationData, model: EtaFn) -> np.ndarray:
    eta = np.asarray(model(np.asarray(theta, dtype=float), data.xi), dtype=float)
    if eta.shape != data.z.shape or not np.all(np.isfinite(eta)):
        raise ValueError("forward model returned non-finite output")
    return data.standardizer.forward(data.z) - data.standardizer.forward(eta)


def loglik_bi(
    theta: np.ndarray, sigma: float, data: CalibrationData, model: EtaFn
) -> float:
    """Independent Gaussian errors around one forward solve."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    try:
        r = _residuals(theta, data, model)
    except (BaseServiceError, ValueError) as exc:
        return _reject("BI", exc)
    m = r.size
    return float(-0.5 * (r @ r) / sigma**2 - m * np.log(sigma) - 0.5 * m * LOG_2PI)


def loglik_bcd(
    theta: np.ndarray,
    d_hypers: DiscrepancyHypers,
    sigma: float,
    data: CalibrationData,
    model: EtaFn,
) -> float:
    """Gaussian with mean eta and covariance K_delta + sigma^2 I."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    try:
        r = _residuals(theta, data, model)
    except (BaseServiceError, ValueError) as exc:
        return _reject("BCD", exc)
    K = se_matrix(data.xi, data.xi, d_hypers.lambda_d, d_hypers.beta_d)
    K[np.diag_indices_from(K)] += sigma**2
    try:
        return gp_log_marginal(r, K)
    except FactorizationError as exc:
        return _reject("BCD", exc)


def surrogate_system(
    theta: np.ndarray,
    s_hypers: SurrogateHypers,
    sigma: float,
    data: CalibrationData,
    synth: SyntheticDataset,
    d_hypers: DiscrepancyHypers | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Stacked training system of the joint surrogate.

    Experimental rows use (x_i, theta) with the proposed theta, synthetic
    rows use their own (x~_j, theta~_j). Outputs are standardized.

    Returns:
        (rows, values, K) where K already carries sigma^2 on the
        experimental block, the nugget on the synthetic block and, when
        ``d_hypers`` is given, K_delta on the experimental block
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if synth.theta.shape[1] != theta.size:
        raise ValueError(
            f"Synthetic records carry {synth.theta.shape[1]} parameters, "
            f"theta has {theta.size}"
        )
    m = len(data)
    exp_rows = np.column_stack([data.xi, np.repeat(theta[None, :], m, axis=0)])
    rows = np.vstack([exp_rows, synth.inputs])
    values = np.concatenate(
        [data.standardizer.forward(data.z), data.standardizer.forward(synth.y)]
    )

    K = JointKernel(s_hypers).matrix(rows, rows)
    nugget = np.concatenate(
        [np.full(m, sigma**2), np.full(len(synth), SYNTHETIC_NUGGET * s_hypers.lambda_x)]
    )
    K[np.diag_indices_from(K)] += nugget
    if d_hypers is not None:
        K[:m, :m] += se_matrix(data.xi, data.xi, d_hypers.lambda_d, d_hypers.beta_d)
    return rows, values, K


def loglik_bce(
    theta: np.ndarray,
    s_hypers: SurrogateHypers,
    sigma: float,
    data: CalibrationData,
    synth: SyntheticDataset,
) -> float:
    """Joint Gaussian log density of standardized [z; y] under the surrogate."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    _, values, K = surrogate_system(theta, s_hypers, sigma, data, synth)
    try:
        return gp_log_marginal(values, K)
    except FactorizationError as exc:
        return _reject("BCE", exc)


def loglik_bced(
    theta: np.ndarray,
    s_hypers: SurrogateHypers,
    d_hypers: DiscrepancyHypers,
    sigma: float,
    data: CalibrationData,
    synth: SyntheticDataset,
) -> float:
    """As ``loglik_bce`` with K_delta added to the experimental block."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    _, values, K = surrogate_system(theta, s_hypers, sigma, data, synth, d_hypers)
    try:
        return gp_log_marginal(values, K)
    except FactorizationError as exc:
        return _reject("BCED", exc)


def surrogate_predict(
    theta: np.ndarray,
    s_hypers: SurrogateHypers,
    sigma: float,
    data: CalibrationData,
    synth: SyntheticDataset,
    xi_query: np.ndarray,
    d_hypers: DiscrepancyHypers | None = None,
) -> GPCurve:
    """
    Surrogate predictive mean and sd of eta(x; theta) at ``xi_query``.

    Conditions on the same stacked rows as the mode's likelihood and maps
    the result back to units of c_sat.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    xi_query = np.asarray(xi_query, dtype=float).reshape(-1)
    rows, values, K = surrogate_system(theta, s_hypers, sigma, data, synth, d_hypers)
    test = np.column_stack([xi_query, np.repeat(theta[None, :], xi_query.size, axis=0)])
    kernel = JointKernel(s_hypers)
    mean, cov = condition(K, kernel.matrix(rows, test), kernel.matrix(test, test), values)
    return GPCurve(
        x=xi_query,
        mean=data.standardizer.inverse(mean),
        sd=data.standardizer.inverse_scale(gp_predict_sd(cov)),
    )


class CalibrationPosterior:
    """
    Log posterior of one mode in sampler coordinates.

    Holds only immutable inputs, so a single instance can be evaluated
    concurrently by every walker.
    """

    def __init__(
        self,
        mode: CalibrationMode,
        data: CalibrationData,
        priors: PriorSet,
        model: EtaFn | None = None,
        synth: SyntheticDataset | None = None,
    ):
        if priors.mode is not mode:
            raise ModeMismatchError(mode.value, priors.mode.value)
        required = mode_requirements(mode)
        if "model" in required and model is None:
            raise ConfigurationError(
                f"Mode {mode.value} requires the forward model", key="constants"
            )
        if "synthetic" in required and (synth is None or len(synth) == 0):
            raise ConfigurationError(
                f"Mode {mode.value} requires a synthetic dataset", key="synthetic"
            )
        self.mode = mode
        self.data = data
        self.priors = priors
        self.model = model
        self.synth = synth
        self.layout = ParameterLayout(mode)

    def log_likelihood(self, theta: np.ndarray, scales: Mapping[str, float]) -> float:
        sigma = scales["sigma"]
        if self.mode is CalibrationMode.BI:
            assert self.model is not None
            return loglik_bi(theta, sigma, self.data, self.model)
        if self.mode is CalibrationMode.BCD:
            assert self.model is not None
            return loglik_bcd(
                theta, _discrepancy(scales), sigma, self.data, self.model
            )
        assert self.synth is not None
        if self.mode is CalibrationMode.BCE:
            return loglik_bce(theta, _surrogate(scales), sigma, self.data, self.synth)
        return loglik_bced(
            theta,
            _surrogate(scales),
            _discrepancy(scales),
            sigma,
            self.data,
            self.synth,
        )

    def __call__(self, vector: np.ndarray) -> float:
        vector = np.asarray(vector, dtype=float)
        if not np.all(np.isfinite(vector)):
            return -np.inf
        theta, scales = self.layout.unpack(vector)
        natural = np.concatenate([theta, list(scales.values())])
        lp = log_prior(natural, self.priors)
        if not np.isfinite(lp):
            return -np.inf
        # d(scale) = scale d(log scale)
        jacobian = float(np.sum(vector[self.layout.n_theta :]))
        ll = self.log_likelihood(theta, scales)
        if not np.isfinite(ll):
            return -np.inf
        return lp + jacobian + ll


def _surrogate(scales: Mapping[str, float]) -> SurrogateHypers:
    return SurrogateHypers(
        beta_x=scales["beta_x"],
        beta_theta=scales["beta_theta"],
        lambda_x=scales["lambda_x"],
    )


def _discrepancy(scales: Mapping[str, float]) -> DiscrepancyHypers:
    return DiscrepancyHypers(beta_d=scales["beta_d"], lambda_d=scales["lambda_d"])


def log_posterior(
    mode: CalibrationMode,
    vector: np.ndarray,
    data: CalibrationData,
    synth: SyntheticDataset | None,
    priors: PriorSet,
    model: EtaFn | None,
) -> float:
    """One-shot evaluation; build a ``CalibrationPosterior`` for repeated use."""
    return CalibrationPosterior(mode, data, priors, model, synth)(vector)
