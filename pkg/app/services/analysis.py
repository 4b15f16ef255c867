"""
Posterior post-processing.

Summaries, the prediction-error metric, Monte-Carlo predictive bands,
discrepancy reconstruction, model-adequacy deviations and corner-plot data.
Model quantities are handled in nondimensional form (x/L, u/c_sat); callers
convert to physical units for output.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy.integrate import trapezoid

from app.config import resolve_threads, settings
from app.exceptions import AnalysisError, BaseServiceError, ModeMismatchError
from app.models.calibration import CalibrationMode, DiscrepancyHypers
from app.models.physics import (
    PUBLISHED_ESTIMATES,
    CalibrationParameters,
    CellProfile,
)
from app.models.results import (
    Chain,
    GPCurve,
    ParameterSummary,
    PosteriorSummary,
    PredictiveBand,
)
from app.services.calibration import (
    CalibrationData,
    EtaFn,
    ParameterLayout,
)
from app.services.gp import SquaredExponential, gp_posterior, gp_predict_sd
from app.services.sampler import r_hat

CORNER_BINS = 50


def chain_mode(chain: Chain) -> CalibrationMode:
    """Calibration mode recorded on a chain."""
    try:
        return CalibrationMode(chain.mode)
    except ValueError as exc:
        raise AnalysisError(f"Chain records unknown mode {chain.mode!r}") from exc


def profile_error(
    pred: CellProfile, exp: CellProfile, c_sat: float, length: float
) -> float:
    """
    Scaled L2 prediction error of a live-cell profile.

    ``pred`` is interpolated onto the experimental x, and the squared
    residual is integrated by the trapezoidal rule over x/length.

    Returns:
        e = (1/c_sat) * sqrt(integral of (pred - exp)^2 d(x/length))

    Raises:
        ValueError: If the experimental x lie outside the predicted range
    """
    if len(exp) < 2:
        raise ValueError("profile_error needs at least 2 experimental points")
    lo, hi = float(np.min(pred.x)), float(np.max(pred.x))
    tol = 1e-12 * max(abs(lo), abs(hi), 1.0)
    if np.min(exp.x) < lo - tol or np.max(exp.x) > hi + tol:
        raise ValueError("Experimental x range exceeds the predicted profile")
    order = np.argsort(exp.x, kind="stable")
    x = exp.x[order]
    residual = pred.on(x) - exp.u[order]
    return float(np.sqrt(trapezoid(residual**2, x / length)) / c_sat)


def summarize(
    chain: Chain,
    values: np.ndarray | None = None,
    names: list[str] | None = None,
) -> PosteriorSummary:
    """
    Marginal summaries of a retained chain.

    Args:
        chain: Retained chain
        values: Optional transformed samples, same shape as the chain's
            (e.g. natural units); the MAP index always comes from log_post
        names: Parameter names, defaulting to the chain's

    Returns:
        PosteriorSummary with MAP, mean, median, equal-tailed 95%
        intervals and the sample correlation matrix
    """
    samples = chain.samples if values is None else np.asarray(values, dtype=float)
    flat = samples.reshape(-1, samples.shape[-1])
    if flat.shape[0] == 0:
        raise AnalysisError("Cannot summarize an empty chain")
    log_post = chain.flat_log_post()
    map_index = int(np.argmax(log_post))

    lower, median, upper = np.quantile(flat, [0.025, 0.5, 0.975], axis=0)
    mean = flat.mean(axis=0)
    parameters = [
        ParameterSummary(
            name=name,
            map=float(flat[map_index, i]),
            mean=float(mean[i]),
            median=float(median[i]),
            lower=float(min(lower[i], median[i])),
            upper=float(max(upper[i], median[i])),
        )
        for i, name in enumerate(names or chain.param_names)
    ]

    if flat.shape[0] > 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.atleast_2d(np.corrcoef(flat, rowvar=False))
        corr = np.nan_to_num(corr, nan=0.0)
        np.fill_diagonal(corr, 1.0)
        corr = np.clip(corr, -1.0, 1.0)
    else:
        corr = np.eye(flat.shape[1])

    rhat = chain.meta.get("r_hat")
    if rhat is None:
        rhat = [float(v) for v in r_hat(chain.samples)]
    return PosteriorSummary(
        parameters=parameters,
        correlation=corr.tolist(),
        map_index=map_index,
        map_log_post=float(log_post[map_index]),
        n_samples=int(flat.shape[0]),
        acceptance_mean=float(np.mean(chain.acceptance)),
        r_hat=[float(v) for v in rhat],
    )


def map_vector(chain: Chain) -> np.ndarray:
    """Sampler-coordinate vector of the highest-posterior retained sample."""
    return chain.flat_samples()[int(np.argmax(chain.flat_log_post()))]


def predictive_band(
    chain: Chain,
    data: CalibrationData,
    model: EtaFn,
    xi_query: np.ndarray,
    n_draws: int = 1000,
    seed: int = 0,
    threads: int | None = None,
) -> PredictiveBand:
    """
    Monte-Carlo predictive band of the live-cell profile.

    Draws (theta_i, sigma_i) without replacement from the chain and forms
    u_i(x) = eta(x; theta_i) + eps_i with eps_i ~ N(0, sigma_i^2). Sigma is
    mapped from standardized to c_sat units for BCD chains.

    Returns:
        Band in units of c_sat with pointwise mean and sd (ddof=1)

    Raises:
        ModeMismatchError: If the chain is not from a model-based mode
        AnalysisError: If too few draws are available or too many solves fail
    """
    mode = chain_mode(chain)
    if mode.uses_surrogate:
        raise ModeMismatchError("bi or bcd", mode.value)
    layout = ParameterLayout(mode)
    flat = chain.flat_samples()
    if n_draws < 2 or n_draws > flat.shape[0]:
        raise AnalysisError(
            f"n_draws must lie in [2, {flat.shape[0]}], got {n_draws}",
            {"n_draws": n_draws, "available": int(flat.shape[0])},
        )
    xi_query = np.asarray(xi_query, dtype=float).reshape(-1)
    picks = np.random.default_rng(seed).choice(flat.shape[0], n_draws, replace=False)
    scale = data.standardizer.sd

    def draw(i: int) -> np.ndarray | None:
        theta, scales = layout.unpack(flat[picks[i]])
        try:
            eta = np.asarray(model(theta, xi_query), dtype=float)
        except BaseServiceError as exc:
            logger.warning(f"Predictive draw {i} skipped: {exc}")
            return None
        noise = np.random.default_rng([seed, i]).normal(
            0.0, scales["sigma"] * scale, size=xi_query.size
        )
        return eta + noise

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        profiles = [p for p in executor.map(draw, range(n_draws)) if p is not None]

    failed = n_draws - len(profiles)
    if failed > settings.MAX_FAILURE_FRACTION * n_draws or len(profiles) < 2:
        raise AnalysisError(
            f"{failed} of {n_draws} predictive draws failed",
            {"failed": failed, "draws": n_draws},
        )
    stack = np.vstack(profiles)
    logger.info(f"Predictive band from {len(profiles)} draws ({failed} skipped)")
    return PredictiveBand(
        x=xi_query, mean=stack.mean(axis=0), sd=stack.std(axis=0, ddof=1)
    )


def discrepancy_posterior(
    theta: np.ndarray,
    d_hypers: DiscrepancyHypers,
    sigma: float,
    data: CalibrationData,
    model: EtaFn,
    xi_query: np.ndarray,
) -> GPCurve:
    """
    GP posterior of delta(x) given residuals z - eta(X; theta).

    Conditioning happens in standardized units with noise sigma^2; the
    returned mean and sd are in units of c_sat.
    """
    eta = np.asarray(model(np.asarray(theta, dtype=float), data.xi), dtype=float)
    std = data.standardizer
    residual = std.forward(data.z) - std.forward(eta)
    kernel = SquaredExponential(d_hypers.kernel())
    mean, cov = gp_posterior(
        data.xi[:, None], residual, kernel, sigma**2, np.asarray(xi_query)[:, None]
    )
    return GPCurve(
        x=np.asarray(xi_query, dtype=float),
        mean=std.inverse_scale(mean),
        sd=std.inverse_scale(gp_predict_sd(cov)),
    )


def reconstruct_discrepancy(
    chain: Chain, data: CalibrationData, model: EtaFn, xi_query: np.ndarray
) -> GPCurve:
    """
    Discrepancy GP at the chain's MAP sample.

    Raises:
        ModeMismatchError: If the chain's mode has no discrepancy term
        FactorizationError: If the conditional cannot be formed
    """
    mode = chain_mode(chain)
    if not mode.uses_discrepancy:
        raise ModeMismatchError("bcd or bced", mode.value)
    theta, scales = ParameterLayout(mode).unpack(map_vector(chain))
    d_hypers = DiscrepancyHypers(beta_d=scales["beta_d"], lambda_d=scales["lambda_d"])
    return discrepancy_posterior(
        theta, d_hypers, scales["sigma"], data, model, xi_query
    )


def deviation(
    data: CalibrationData, theta_hat: np.ndarray, model: EtaFn
) -> np.ndarray:
    """d(x_i) = z_i - eta(x_i; theta_hat), in units of c_sat."""
    return data.z - np.asarray(model(np.asarray(theta_hat, dtype=float), data.xi))


def fisher_wave_speed(D_n: float, tau_n: float) -> float:
    """Travelling-wave speed 2 sqrt(D_n / tau_n) of the Fisher equation [cm/s]."""
    if D_n <= 0 or tau_n <= 0:
        raise ValueError("D_n and tau_n must be positive")
    return float(2.0 * np.sqrt(D_n / tau_n))


def published_comparison(
    summary: PosteriorSummary, mode: CalibrationMode
) -> dict[str, dict[str, float]]:
    """
    MAP theta next to the reference values and published MAP estimates.

    The ``published`` column is present only for modes with a published
    estimate (BI and BCD).
    """
    by_name = summary.by_name()
    reference = PUBLISHED_ESTIMATES["reference"]
    published = PUBLISHED_ESTIMATES.get(mode.value)
    rows: dict[str, dict[str, float]] = {}
    for name in CalibrationParameters.NAMES:
        row = {"map": by_name[name].map, "reference": float(getattr(reference, name))}
        if published is not None:
            row["published"] = float(getattr(published, name))
        rows[name] = row
    return rows


@dataclass(frozen=True)
class Marginal:
    """1-D histogram of one parameter with estimator markers."""

    name: str
    edges: np.ndarray
    counts: np.ndarray
    map: float
    mean: float


@dataclass(frozen=True)
class PairHistogram:
    """2-D histogram of one parameter pair; rows follow ``first``."""

    first: str
    second: str
    first_edges: np.ndarray
    second_edges: np.ndarray
    counts: np.ndarray


@dataclass
class CornerData:
    marginals: list[Marginal] = field(default_factory=list)
    pairs: list[PairHistogram] = field(default_factory=list)


def _hist_range(values: np.ndarray) -> tuple[int, tuple[float, float]]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if lo == hi:
        return 1, (lo - 0.5, hi + 0.5)
    return CORNER_BINS, (lo, hi)


def pair_histogram(
    samples: np.ndarray, names: list[str], i: int, j: int
) -> PairHistogram:
    """Joint histogram of columns i and j over their sample ranges."""
    bins_i, range_i = _hist_range(samples[:, i])
    bins_j, range_j = _hist_range(samples[:, j])
    counts, edges_i, edges_j = np.histogram2d(
        samples[:, i], samples[:, j], bins=[bins_i, bins_j], range=[range_i, range_j]
    )
    return PairHistogram(names[i], names[j], edges_i, edges_j, counts.astype(int))


def corner_export(
    samples: np.ndarray, names: list[str], log_post: np.ndarray
) -> CornerData:
    """
    Histogram data behind a corner plot.

    Args:
        samples: Flat samples (n, p) in the units to be displayed
        names: Parameter names
        log_post: Log posterior per sample, for the MAP marker
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise AnalysisError("Cannot export an empty chain")
    map_row = samples[int(np.argmax(log_post))]
    corner = CornerData()
    for i, name in enumerate(names):
        bins, span = _hist_range(samples[:, i])
        counts, edges = np.histogram(samples[:, i], bins=bins, range=span)
        corner.marginals.append(
            Marginal(name, edges, counts, float(map_row[i]), float(samples[:, i].mean()))
        )
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            corner.pairs.append(pair_histogram(samples, names, i, j))
    return corner


def estimator_profiles(
    map_theta: np.ndarray,
    mean_theta: np.ndarray,
    model: EtaFn,
    xi_query: np.ndarray,
) -> dict[str, np.ndarray]:
    """eta at the MAP and posterior-mean multipliers, in units of c_sat."""
    return {
        "map": np.asarray(model(np.asarray(map_theta), xi_query), dtype=float),
        "mean": np.asarray(model(np.asarray(mean_theta), xi_query), dtype=float),
    }


def error_table(
    predictions: dict[str, np.ndarray],
    xi_pred: np.ndarray,
    data: CalibrationData,
) -> dict[str, float]:
    """
    Prediction error e of each named predictor against the observations.

    Args:
        predictions: Predictor name -> profile in units of c_sat at ``xi_pred``
        xi_pred: Nondimensional coordinates of the predictions
        data: Observations

    Returns:
        Predictor name -> e (dimensionless)
    """
    observed = CellProfile(x=data.xi, u=data.z)
    table = {
        name: profile_error(CellProfile(x=xi_pred, u=profile), observed, 1.0, 1.0)
        for name, profile in predictions.items()
    }
    for name, value in table.items():
        logger.info(f"Prediction error e[{name}] = {value:.4f}")
    return table
