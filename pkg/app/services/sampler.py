"""
Affine-invariant ensemble MCMC with the stretch move.

The ensemble is split into two halves; each half proposes against the frozen
other half, so walkers within a half can be evaluated concurrently without
changing the distribution of the chain. Every random number is drawn from a
stream keyed on (seed, step, walker), which makes results independent of the
thread count.
"""

import math
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import arviz as az
import numpy as np
from loguru import logger

from app.config import resolve_threads, settings
from app.exceptions import SamplerError, SamplerStuckError
from app.models.calibration import PriorSet
from app.models.results import Chain
from app.services.calibration import ParameterLayout

LogPosterior = Callable[[np.ndarray], float]

STRETCH_SCALE = 2.0

# Start-point attempts per walker before giving up.
INIT_ATTEMPTS_PER_WALKER = 100
# split R-hat needs two halves of at least two draws
MIN_RHAT_STEPS = 4


def draw_stretch(a: float, rng: np.random.Generator) -> float:
    """Draw g with density proportional to 1/sqrt(g) on [1/a, a]."""
    return float(((a - 1.0) * rng.random() + 1.0) ** 2 / a)


def stretch_move(
    walker: np.ndarray, partner: np.ndarray, a: float, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """
    Stretch proposal of ``walker`` along the line through ``partner``.

    Args:
        walker: Current position
        partner: Position of a walker from the complementary half
        a: Stretch scale (> 1)
        rng: Random generator

    Returns:
        (proposal, log Hastings correction (n_params - 1) * log g)
    """
    if a <= 1.0:
        raise ValueError(f"Stretch scale must exceed 1, got {a}")
    walker = np.asarray(walker, dtype=float)
    partner = np.asarray(partner, dtype=float)
    g = draw_stretch(a, rng)
    proposal = partner + g * (walker - partner)
    return proposal, (walker.size - 1) * math.log(g)


def retained_steps(n_samples: int, burn_in: float) -> int:
    """floor((1 - burn_in) * n_samples), robust to float rounding."""
    return int(math.floor((1.0 - burn_in) * n_samples + 1e-9))


def init_walkers(
    priors: PriorSet,
    n_walkers: int,
    seed: int,
    log_post: LogPosterior | None = None,
) -> np.ndarray:
    """
    Draw starting positions from the priors in sampler coordinates.

    Theta is uniform in the box and scales come from their Gamma priors,
    stored as logarithms. With ``log_post`` given, starts with a non-finite
    log posterior are rejected and redrawn.

    Raises:
        SamplerError: If fewer than ``n_walkers`` finite starts are found in
            100 * n_walkers attempts
    """
    layout = ParameterLayout(priors.mode)
    box = priors.theta_box
    rng = np.random.default_rng([seed, 0xC0FFEE])
    starts: list[np.ndarray] = []
    attempts = 0
    max_attempts = INIT_ATTEMPTS_PER_WALKER * n_walkers
    while len(starts) < n_walkers and attempts < max_attempts:
        attempts += 1
        theta = box.lo + rng.random(box.dims) * (box.hi - box.lo)
        scales = [float(priors.scales[name].sample(rng)) for name in layout.scale_names]
        if min(scales, default=1.0) <= 0:
            continue
        candidate = np.concatenate([theta, np.log(scales)])
        if log_post is not None and not np.isfinite(log_post(candidate)):
            logger.debug(f"Rejected start {attempts}: non-finite log posterior")
            continue
        starts.append(candidate)

    if len(starts) < n_walkers:
        raise SamplerError(
            f"Found only {len(starts)} of {n_walkers} finite starting points after "
            f"{attempts} draws. Narrow the parameter range (design box) or revise "
            "the priors.",
            {"found": len(starts), "attempts": attempts},
        )
    logger.info(f"Initialized {n_walkers} walkers in {attempts} prior draws")
    return np.vstack(starts)


def r_hat(samples: np.ndarray) -> np.ndarray:
    """
    Rank-normalized split R-hat treating walkers as chains.

    Args:
        samples: Array of shape (n_steps, n_walkers, n_params)

    Returns:
        One value per parameter; nan when fewer than 4 steps
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < MIN_RHAT_STEPS or samples.shape[1] < 2:
        return np.full(samples.shape[2], np.nan)
    idata = az.from_dict(posterior={"p": np.moveaxis(samples, 0, 1)})
    return np.asarray(az.rhat(idata, method="rank")["p"].values, dtype=float)


def run_ensemble(
    log_post: LogPosterior,
    n_walkers: int,
    n_samples: int,
    burn_in: float,
    init: np.ndarray,
    seed: int,
    *,
    a: float = STRETCH_SCALE,
    thin: int = 1,
    threads: int | None = None,
    param_names: list[str] | None = None,
    meta: dict[str, Any] | None = None,
    start_step: int = 0,
    stuck_window: int | None = None,
) -> Chain:
    """
    Run the stretch-move ensemble sampler.

    Args:
        log_post: Log posterior in sampler coordinates
        n_walkers: Ensemble size (>= 2)
        n_samples: Steps per walker
        burn_in: Fraction of leading steps discarded, in [0, 1)
        init: Starting positions, (n_walkers, n_params)
        seed: Seed for every per-walker random stream
        a: Stretch scale
        thin: Keep every ``thin``-th retained step
        threads: Worker count for log posterior evaluation
        param_names: Column names recorded on the chain
        meta: Extra metadata merged into the chain's ``meta``
        start_step: Global index of the first step, used when resuming
        stuck_window: Steps without any acceptance before giving up

    Returns:
        Chain holding the retained, thinned steps

    Raises:
        SamplerError: On invalid arguments or non-finite starting points
        SamplerStuckError: If no walker moves for ``stuck_window`` steps
    """
    positions = np.array(init, dtype=float, copy=True)
    if positions.ndim != 2 or positions.shape[0] != n_walkers:
        raise SamplerError(
            f"init must have shape ({n_walkers}, n_params), got {positions.shape}"
        )
    n_params = positions.shape[1]
    if n_walkers < 2:
        raise SamplerError("The stretch move needs at least 2 walkers")
    if n_samples < 1 or thin < 1:
        raise SamplerError("n_samples and thin must be positive")
    if not 0.0 <= burn_in < 1.0:
        raise SamplerError(f"burn_in must lie in [0, 1), got {burn_in}")
    if n_walkers < 2 * n_params:
        logger.warning(
            f"{n_walkers} walkers for {n_params} parameters; "
            f"at least {2 * n_params} are recommended"
        )
    names = param_names or [f"p{i}" for i in range(n_params)]
    window = stuck_window or settings.STUCK_WINDOW

    keep = retained_steps(n_samples, burn_in)
    first_kept = n_samples - keep
    kept_steps = range(first_kept, n_samples, thin)
    samples = np.empty((len(kept_steps), n_walkers, n_params))
    log_probs = np.empty((len(kept_steps), n_walkers))
    accepted = np.zeros(n_walkers)

    workers = resolve_threads(threads)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def evaluate(points: list[np.ndarray]) -> np.ndarray:
        if executor is None:
            return np.array([log_post(p) for p in points], dtype=float)
        return np.fromiter(executor.map(log_post, points), dtype=float, count=len(points))

    halves = (np.arange(n_walkers // 2), np.arange(n_walkers // 2, n_walkers))
    report_every = max(1, n_samples // 10)
    last_move = 0
    started = time.perf_counter()
    try:
        current = evaluate(list(positions))
        if not np.all(np.isfinite(current)):
            bad = np.flatnonzero(~np.isfinite(current)).tolist()
            raise SamplerError(
                "Starting points must have a finite log posterior",
                {"walkers": bad},
            )
        logger.info(
            f"Sampling {n_samples} steps x {n_walkers} walkers "
            f"({n_params} parameters, {workers} threads)"
        )

        slot = 0
        for local_step in range(n_samples):
            step = start_step + local_step
            moved = False
            for active, frozen in (halves, halves[::-1]):
                proposals: list[np.ndarray] = []
                corrections = np.empty(active.size)
                thresholds = np.empty(active.size)
                for i, k in enumerate(active):
                    rng = np.random.default_rng([seed, step, int(k)])
                    partner = positions[frozen[rng.integers(frozen.size)]]
                    proposal, corrections[i] = stretch_move(positions[k], partner, a, rng)
                    thresholds[i] = math.log(rng.random())
                    proposals.append(proposal)
                trial = evaluate(proposals)
                with np.errstate(invalid="ignore"):
                    ratio = corrections + trial - current[active]
                accept = np.isfinite(trial) & (thresholds < ratio)
                for i in np.flatnonzero(accept):
                    k = active[i]
                    positions[k] = proposals[i]
                    current[k] = trial[i]
                accepted[active[accept]] += 1
                moved = moved or bool(np.any(accept))

            if moved:
                last_move = local_step
            elif local_step - last_move >= window:
                raise SamplerStuckError(step, window)

            if local_step >= first_kept and (local_step - first_kept) % thin == 0:
                samples[slot] = positions
                log_probs[slot] = current
                slot += 1

            if (local_step + 1) % report_every == 0:
                elapsed = time.perf_counter() - started
                logger.info(
                    f"Step {local_step + 1}/{n_samples}: "
                    f"acceptance {np.mean(accepted) / (local_step + 1):.3f}, "
                    f"{(local_step + 1) / elapsed:.2f} it/s, {elapsed:.1f} s elapsed"
                )
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    wall = time.perf_counter() - started
    chain_meta: dict[str, Any] = {
        "seed": seed,
        "burn_in": burn_in,
        "a": a,
        "thin": thin,
        "n_samples": n_samples,
        "start_step": start_step,
        "steps_run": start_step + n_samples,
        "wall_time": wall,
        "it_per_s": n_samples / wall if wall > 0 else float("inf"),
    }
    chain_meta.update(meta or {})
    chain = Chain(
        samples=samples,
        log_post=log_probs,
        acceptance=accepted / n_samples,
        param_names=list(names),
        meta=chain_meta,
    )
    chain.meta["r_hat"] = [float(v) for v in r_hat(samples)]
    logger.info(
        f"Sampling finished in {wall:.1f} s ({chain_meta['it_per_s']:.2f} it/s), "
        f"mean acceptance {float(np.mean(chain.acceptance)):.3f}"
    )
    return chain


def extend_chain(previous: Chain, continuation: Chain) -> Chain:
    """Append a resumed run to the chain it continued from."""
    if previous.param_names != continuation.param_names:
        raise SamplerError("Cannot extend a chain with different parameters")
    if previous.n_walkers != continuation.n_walkers:
        raise SamplerError("Cannot extend a chain with a different ensemble size")
    steps_a = int(previous.meta.get("n_samples", previous.n_steps))
    steps_b = int(continuation.meta.get("n_samples", continuation.n_steps))
    acceptance = (previous.acceptance * steps_a + continuation.acceptance * steps_b) / (
        steps_a + steps_b
    )
    meta = {**previous.meta, **continuation.meta}
    meta["n_samples"] = steps_a + steps_b
    meta["start_step"] = previous.meta.get("start_step", 0)
    meta["wall_time"] = previous.meta.get("wall_time", 0.0) + continuation.meta.get(
        "wall_time", 0.0
    )
    samples = np.concatenate([previous.samples, continuation.samples])
    meta["r_hat"] = [float(v) for v in r_hat(samples)]
    return Chain(
        samples=samples,
        log_post=np.concatenate([previous.log_post, continuation.log_post]),
        acceptance=acceptance,
        param_names=list(previous.param_names),
        meta=meta,
    )
