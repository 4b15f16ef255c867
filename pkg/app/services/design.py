"""
Experiment design: Latin hypercube sampling, experimental point selection and
synthetic surrogate-training datasets.
"""

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np
from loguru import logger
from scipy.stats import qmc

from app.config import resolve_threads, settings
from app.exceptions import BaseServiceError, DesignError
from app.models.data import DesignBox, ExperimentalDataset, SyntheticDataset

# Evaluates the model at given multipliers, returning outputs at x_design.
ForwardEvaluator = Callable[[np.ndarray], np.ndarray]


def latin_hypercube(n: int, d: int, seed: int) -> np.ndarray:
    """
    Stratified sample of n points in [0, 1]^d.

    Every axis, cut into n equal bins, holds exactly one point per bin.

    Args:
        n: Number of points (>= 1)
        d: Dimension (>= 1)
        seed: Random seed

    Returns:
        Array of shape (n, d)
    """
    if n < 1 or d < 1:
        raise ValueError("latin_hypercube needs n >= 1 and d >= 1")
    sampler = qmc.LatinHypercube(d=d, seed=np.random.default_rng(seed))
    return sampler.random(n)


def select_experimental_points(
    full: ExperimentalDataset, n_lhs: int, seed: int
) -> np.ndarray:
    """
    Choose the observation subset used for calibration.

    The points at min(x) and max(x) anchor the subset; the remaining
    ``n_lhs`` are the nearest unused observations to LHS targets over
    [min x, max x]. Ties resolve to the first matching index.

    Returns:
        Sorted indices into ``full.observed`` (n_lhs + 2 of them)

    Raises:
        DesignError: If the dataset has fewer than n_lhs + 2 points
    """
    x = full.x
    if x.size < n_lhs + 2:
        raise DesignError(
            f"Need at least {n_lhs + 2} observations, dataset has {x.size}",
            {"available": int(x.size), "requested": n_lhs + 2},
        )
    lo_idx = int(np.argmin(x))
    hi_idx = int(np.argmax(x))
    chosen = [lo_idx] if lo_idx == hi_idx else [lo_idx, hi_idx]
    used = np.zeros(x.size, dtype=bool)
    used[chosen] = True

    if n_lhs > 0:
        targets = x[lo_idx] + latin_hypercube(n_lhs, 1, seed)[:, 0] * (
            x[hi_idx] - x[lo_idx]
        )
        for target in np.sort(targets):
            distance = np.where(used, np.inf, np.abs(x - target))
            pick = int(np.argmin(distance))
            used[pick] = True
            chosen.append(pick)

    logger.info(f"Selected {len(chosen)} experimental points (seed={seed})")
    return np.sort(np.asarray(chosen, dtype=int))


def draw_parameters(
    pool: int,
    box: DesignBox,
    seed: int,
    sampling: Literal["uniform", "lhs"] = "uniform",
) -> np.ndarray:
    """Draw ``pool`` multiplier vectors inside ``box``."""
    if sampling == "lhs":
        unit = latin_hypercube(pool, box.dims, seed)
    else:
        unit = np.random.default_rng(seed).random((pool, box.dims))
    return box.scale_unit(unit)


def generate_synthetic(
    pool: int,
    keep: int,
    box: DesignBox,
    x_design: np.ndarray,
    seed: int,
    model: ForwardEvaluator,
    *,
    sampling: Literal["uniform", "lhs"] = "uniform",
    threads: int | None = None,
    reference: dict[str, float] | None = None,
) -> SyntheticDataset:
    """
    Build the surrogate-training dataset.

    Draws ``pool`` multiplier vectors in ``box``, runs ``model`` for each,
    harvests one (x, theta, y) record per (draw, x) pair and keeps ``keep``
    of them uniformly without replacement.

    Args:
        pool: Number of forward simulations
        keep: Number of records retained
        box: Sampling box for the multipliers
        x_design: Nondimensional harvesting coordinates
        seed: Seed for draws and subsampling
        model: Forward evaluator returning outputs at ``x_design``
        sampling: "uniform" draws or a Latin hypercube over the box
        threads: Worker count for concurrent forward runs
        reference: Reference parameter values recorded in provenance

    Returns:
        SyntheticDataset, reproducible from ``seed``

    Raises:
        DesignError: If ``keep`` exceeds the harvestable records, or more
            than the tolerated fraction of forward runs fail
    """
    x_design = np.asarray(x_design, dtype=float)
    n_x = x_design.size
    if keep > pool * n_x:
        raise DesignError(
            f"keep={keep} exceeds available records {pool * n_x}",
            {"keep": keep, "available": pool * n_x},
        )
    draws = draw_parameters(pool, box, seed, sampling)

    def run(index: int) -> np.ndarray | None:
        try:
            out = np.asarray(model(draws[index]), dtype=float)
        except BaseServiceError as exc:
            logger.warning(f"Synthetic draw {index} skipped: {exc}")
            return None
        if out.shape != (n_x,) or not np.all(np.isfinite(out)):
            logger.warning(f"Synthetic draw {index} skipped: non-finite output")
            return None
        return out

    workers = resolve_threads(threads)
    logger.info(f"Running {pool} forward simulations on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        outputs = list(executor.map(run, range(pool)))

    failed = sum(out is None for out in outputs)
    if failed > settings.MAX_FAILURE_FRACTION * pool:
        raise DesignError(
            f"{failed} of {pool} forward simulations failed",
            {"failed": failed, "pool": pool},
        )

    # Canonical (draw, x) order before subsampling.
    records_x, records_theta, records_y = [], [], []
    for index, out in enumerate(outputs):
        if out is None:
            continue
        records_x.append(x_design)
        records_theta.append(np.repeat(draws[index][None, :], n_x, axis=0))
        records_y.append(out)
    all_x = np.concatenate(records_x)
    all_theta = np.concatenate(records_theta)
    all_y = np.concatenate(records_y)

    if keep > all_x.size:
        raise DesignError(
            f"keep={keep} exceeds records left after failures ({all_x.size})",
            {"keep": keep, "available": int(all_x.size)},
        )
    rng = np.random.default_rng([seed, 1])
    picked = np.sort(rng.choice(all_x.size, size=keep, replace=False))

    provenance = {
        "seed": seed,
        "pool": pool,
        "keep": keep,
        "sampling": sampling,
        "box": {"lower": box.lower, "upper": box.upper},
        "x_design": x_design.tolist(),
        "failed": failed,
        "reference": reference or {},
    }
    logger.info(f"Synthetic dataset: {keep} records from {pool - failed} runs")
    return SyntheticDataset(
        x=all_x[picked],
        theta=all_theta[picked],
        y=all_y[picked],
        provenance=provenance,
    )


def replay_record(
    synth: SyntheticDataset,
    index: int,
    model: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> float:
    """
    Re-run the forward model for one synthetic record.

    Args:
        synth: Synthetic dataset
        index: Record index
        model: eta evaluator taking (multipliers, xi)

    Returns:
        Model output at the record's x; equals ``synth.y[index]`` up to
        solver tolerance when the model and seed are unchanged
    """
    if not 0 <= index < len(synth):
        raise IndexError(f"Record {index} out of range for {len(synth)} records")
    out = model(synth.theta[index], np.array([synth.x[index]]))
    return float(np.asarray(out, dtype=float).reshape(-1)[0])
