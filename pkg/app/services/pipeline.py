"""
Calibration pipeline for the command-line workflow.

This service orchestrates the commands:
simulate → design → calibrate → analyze (and predict)

Every command reads its inputs from a ``RunConfig``, writes its artifacts
under ``config.out`` and returns the paths it wrote.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from app.configs.run import RunConfig
from app.exceptions import ConfigurationError, ModeMismatchError
from app.models.calibration import (
    CalibrationMode,
    DiscrepancyHypers,
    NoiseModel,
    SurrogateHypers,
)
from app.models.data import ExperimentalDataset, SyntheticDataset
from app.models.physics import (
    CalibrationParameters,
    CellProfile,
    FixedConstants,
    SpatialGrid,
    reference_parameters,
)
from app.models.results import Chain
from app.services.analysis import (
    chain_mode,
    corner_export,
    deviation,
    error_table,
    estimator_profiles,
    fisher_wave_speed,
    predictive_band,
    published_comparison,
    reconstruct_discrepancy,
    summarize,
)
from app.services.calibration import (
    CalibrationData,
    CalibrationPosterior,
    ParameterLayout,
    default_priors,
    surrogate_predict,
)
from app.services.design import generate_synthetic, select_experimental_points
from app.services.gp import Standardizer
from app.services.report import render_report, write_bundle, write_corner
from app.services.sampler import extend_chain, init_walkers, run_ensemble
from app.services.solver import ForwardModel, solve_forward
from app.utils.chain_io import export_chain_csv, load_chain, save_chain
from app.utils.data_io import (
    load_synthetic,
    read_constants,
    read_profile,
    save_synthetic,
    write_profile,
    write_table,
)
from app.utils.fs import ensure_directory, write_json


@dataclass(frozen=True)
class ExperimentContext:
    """Constants, grid, initial data and forward model of one experiment."""

    consts: FixedConstants
    grid: SpatialGrid
    model: ForwardModel
    observed: CellProfile | None

    def dataset(self) -> ExperimentalDataset:
        if self.observed is None:
            raise ConfigurationError("Observed data required", key="data")
        return ExperimentalDataset(
            u0=self.model.u0, observed=self.observed, v0=self.model.v0
        )


class CalibrationPipeline:
    """Command orchestrator bound to one resolved configuration."""

    def __init__(self, config: RunConfig):
        """
        Initialize the pipeline.

        Args:
            config: Run configuration; preset defaults are resolved here
        """
        self.config = config.resolved()
        self.out = ensure_directory(self.config.out)

    # Shared setup

    def context(self, need_data: bool = True) -> ExperimentContext:
        """Load constants and profiles and bind the forward model."""
        cfg = self.config
        cfg.require("initial", *(("data",) if need_data else ()))
        consts = read_constants(cfg.constants)
        assert cfg.n_nodes is not None
        grid = SpatialGrid(n_nodes=cfg.n_nodes, length=consts.L)
        u0 = read_profile(cfg.initial, consts)  # type: ignore[arg-type]
        v0 = read_profile(cfg.initial_dead, consts) if cfg.initial_dead else None
        observed = read_profile(cfg.data, consts) if need_data else None
        model = ForwardModel(consts, grid, u0, v0)
        return ExperimentContext(consts, grid, model, observed)

    def observation_indices(self, ctx: ExperimentContext) -> np.ndarray:
        """Indices of the observations used for calibration."""
        full = ctx.dataset()
        cfg = self.config
        if not cfg.select_points or len(full) <= cfg.n_lhs + 2:
            return np.arange(len(full))
        return select_experimental_points(full, cfg.n_lhs, cfg.seed)

    def calibration_data(
        self, ctx: ExperimentContext, mode: CalibrationMode, indices: np.ndarray
    ) -> CalibrationData:
        subset = ctx.dataset().subset(indices)
        return CalibrationData.from_experiment(subset, ctx.consts, mode)

    def _physical(self, ctx: ExperimentContext, xi: np.ndarray) -> np.ndarray:
        return np.asarray(xi) * ctx.consts.L

    # Commands

    def simulate(self) -> dict[str, Path]:
        """Forward solve at theta; optionally emit noisy observations."""
        cfg = self.config
        ctx = self.context(need_data=False)
        theta = (
            CalibrationParameters.from_array(cfg.theta)
            if cfg.theta is not None
            else reference_parameters()
        )
        logger.info(f"Simulating at {theta.model_dump()}")
        trajectory = solve_forward(
            theta, ctx.consts, ctx.grid, ctx.model.u0, ctx.model.v0
        )
        final = trajectory.final()
        written = {
            "final": write_profile(self.out / "final_profile.csv", ctx.grid.x, final.u),
        }
        n_t, n_x = trajectory.u.shape
        written["trajectory"] = write_table(
            self.out / "trajectory.csv",
            {
                "t": np.repeat(trajectory.times, n_x),
                "x": np.tile(trajectory.x, n_t),
                "u": trajectory.u.ravel(),
                "v": trajectory.v.ravel(),
                "w": trajectory.w.ravel(),
            },
        )
        if cfg.noise_sd is not None:
            x_obs = np.linspace(0.0, ctx.consts.L, cfg.n_obs)
            noise = np.zeros(x_obs.size)
            if cfg.noise_sd > 0:
                noise = NoiseModel(sigma=cfg.noise_sd * ctx.consts.c_sat).sample(
                    np.random.default_rng(cfg.seed), x_obs.size
                )
            written["observed"] = write_profile(
                self.out / "observed.csv",
                x_obs,
                np.interp(x_obs, ctx.grid.x, final.u) + noise,
            )
        written["summary"] = write_json(
            self.out / "simulate.json",
            {
                "theta": theta.model_dump(),
                "constants": ctx.consts.model_dump(),
                "n_snapshots": n_t,
                "solver": trajectory.stats,
                "config": cfg.effective(),
            },
        )
        return written

    def design(self) -> dict[str, Path]:
        """Select experimental points and build the synthetic dataset."""
        cfg = self.config
        ctx = self.context()
        full = ctx.dataset()
        indices = select_experimental_points(full, cfg.n_lhs, cfg.seed)
        subset = full.subset(indices)
        x_design = subset.scaled_x(ctx.consts)

        def evaluate(multipliers: np.ndarray) -> np.ndarray:
            return ctx.model.eta_scaled(multipliers, x_design)

        synth = generate_synthetic(
            cfg.pool,
            cfg.keep,
            cfg.box,
            x_design,
            cfg.seed,
            evaluate,
            sampling=cfg.sampling,  # type: ignore[arg-type]
            threads=cfg.threads,
            reference=ctx.model.reference.model_dump(),
        )
        return {
            "points": write_profile(
                self.out / "experimental_points.csv", subset.x, subset.z
            ),
            "synthetic": save_synthetic(self.out / "synthetic.csv", synth),
            "summary": write_json(
                self.out / "design.json",
                {
                    "indices": indices.tolist(),
                    "n_points": int(indices.size),
                    "n_synthetic": len(synth),
                    "config": cfg.effective(),
                },
            ),
        }

    def calibrate(self) -> dict[str, Path]:
        """Run the ensemble sampler for the configured mode."""
        cfg = self.config
        mode = cfg.mode
        ctx = self.context()
        indices = self.observation_indices(ctx)
        data = self.calibration_data(ctx, mode, indices)
        synth = self._synthetic(mode)
        priors = default_priors(data, synth, mode, cfg.box)
        posterior = CalibrationPosterior(
            mode,
            data,
            priors,
            model=ctx.model.eta_scaled if mode.uses_forward_model else None,
            synth=synth,
        )
        layout = posterior.layout
        meta: dict[str, Any] = {
            "mode": mode.value,
            "data_indices": indices.tolist(),
            "standardizer": data.standardizer.to_dict(),
        }
        assert cfg.n_walkers is not None and cfg.n_samples is not None

        previous: Chain | None = None
        if cfg.resume is not None:
            previous = load_chain(cfg.resume)
            if chain_mode(previous) is not mode:
                raise ModeMismatchError(mode.value, str(previous.mode))
            init = previous.last_positions()
            start_step = int(previous.meta.get("steps_run", previous.n_steps))
            burn_in = 0.0
            logger.info(f"Resuming {cfg.resume} from step {start_step}")
        else:
            init = init_walkers(priors, cfg.n_walkers, cfg.seed, posterior)
            start_step = 0
            burn_in = cfg.burn_in

        chain = run_ensemble(
            posterior,
            init.shape[0],
            cfg.n_samples,
            burn_in,
            init,
            cfg.seed,
            a=cfg.stretch,
            thin=cfg.thin,
            threads=cfg.threads,
            param_names=list(layout.names),
            meta=meta,
            start_step=start_step,
        )
        if previous is not None:
            chain = extend_chain(previous, chain)

        natural = layout.to_natural(chain.samples, ctx.model.reference)
        summary = summarize(chain, natural, list(layout.names))
        written = {
            "chain": save_chain(self.out / "chain.bin", chain),
            "samples": export_chain_csv(self.out / "chain.csv", chain, natural),
        }
        results = {
            "mode": mode.value,
            "summary": summary.model_dump(),
            "priors": priors.model_dump(mode="json"),
            "standardizer": data.standardizer.to_dict(),
            "data_indices": indices.tolist(),
            "config": cfg.effective(),
        }
        written["results"] = write_bundle(self.out, results)[0]
        written["timing"] = write_json(
            self.out / "timing.json",
            {
                "wall_time": chain.meta.get("wall_time"),
                "it_per_s": chain.meta.get("it_per_s"),
                "acceptance": chain.acceptance.tolist(),
            },
        )
        return written

    def analyze(self) -> dict[str, Path]:
        """Emit every post-processing artifact for a chain."""
        cfg = self.config
        cfg.require("chain")
        chain = load_chain(cfg.chain)  # type: ignore[arg-type]
        mode = self._chain_mode(chain)
        ctx = self.context()
        indices = np.asarray(
            chain.meta.get("data_indices", self.observation_indices(ctx)), dtype=int
        )
        data = self._recorded_data(ctx, mode, indices, chain)
        layout = ParameterLayout(mode)
        reference = ctx.model.reference

        natural = layout.to_natural(chain.samples, reference)
        summary = summarize(chain, natural, list(layout.names))
        multipliers = layout.to_natural(chain.flat_samples())
        map_nat = multipliers[summary.map_index]
        mean_nat = multipliers.mean(axis=0)
        theta_map = map_nat[: layout.n_theta]
        scales = dict(zip(layout.scale_names, map_nat[layout.n_theta :], strict=True))

        xi = ctx.grid.xi
        predictions = estimator_profiles(
            theta_map, mean_nat[: layout.n_theta], ctx.model.eta_scaled, xi
        )
        written: dict[str, Path] = {}
        synth = self._synthetic(mode) if mode.uses_surrogate else None
        d_hypers = (
            DiscrepancyHypers(beta_d=scales["beta_d"], lambda_d=scales["lambda_d"])
            if mode.uses_discrepancy
            else None
        )

        if mode.uses_surrogate:
            assert synth is not None
            s_hypers = SurrogateHypers(
                beta_x=scales["beta_x"],
                beta_theta=scales["beta_theta"],
                lambda_x=scales["lambda_x"],
            )
            surrogate = surrogate_predict(
                theta_map, s_hypers, scales["sigma"], data, synth, xi, d_hypers
            )
            predictions["surrogate"] = surrogate.mean
            written["surrogate"] = self._write_curve(
                ctx, "surrogate.csv", xi, surrogate.mean, surrogate.sd
            )

        if d_hypers is not None:
            delta = reconstruct_discrepancy(chain, data, ctx.model.eta_scaled, xi)
            predictions["corrected"] = predictions["map"] + delta.mean
            written["discrepancy"] = self._write_curve(
                ctx, "discrepancy.csv", xi, delta.mean, delta.sd
            )

        errors = error_table(predictions, xi, data)
        d = deviation(data, theta_map, ctx.model.eta_scaled)
        written["deviation"] = write_table(
            self.out / "deviation.csv",
            {"x": self._physical(ctx, data.xi), "d": d * ctx.consts.c_sat},
        )
        written["estimators"] = write_table(
            self.out / "estimators.csv",
            {"x": ctx.grid.x}
            | {name: p * ctx.consts.c_sat for name, p in predictions.items()},
        )

        if mode.uses_forward_model:
            written["band"] = self._band(ctx, chain, data)

        corner = corner_export(
            natural.reshape(-1, layout.dim), list(layout.names), chain.flat_log_post()
        )
        corner_files = write_corner(self.out / "corner", corner)

        tau_map = float(natural.reshape(-1, layout.dim)[summary.map_index, 0])
        speed = fisher_wave_speed(ctx.consts.D_n, tau_map)
        comparison = published_comparison(summary, mode)
        results = {
            "mode": mode.value,
            "summary": summary.model_dump(),
            "errors": errors,
            "fisher_wave_speed": speed,
            "comparison": comparison,
            "standardizer": data.standardizer.to_dict(),
            "config": cfg.effective(),
        }
        artifacts = sorted(
            [p.name for p in written.values()]
            + [f"corner/{p.name}" for p in corner_files]
        )
        report = render_report(
            mode.value, cfg.effective(), summary, errors, artifacts, speed, comparison
        )
        bundle = write_bundle(self.out, results, report, name="analysis")
        written["analysis"], written["report"] = bundle
        return written

    def predict(self) -> dict[str, Path]:
        """Predictive band from a chain, standalone."""
        cfg = self.config
        cfg.require("chain")
        chain = load_chain(cfg.chain)  # type: ignore[arg-type]
        mode = self._chain_mode(chain)
        ctx = self.context()
        indices = np.asarray(
            chain.meta.get("data_indices", self.observation_indices(ctx)), dtype=int
        )
        data = self._recorded_data(ctx, mode, indices, chain)
        return {"band": self._band(ctx, chain, data)}

    # Helpers

    def _chain_mode(self, chain: Chain) -> CalibrationMode:
        mode = chain_mode(chain)
        if "mode" in self.config.model_fields_set and self.config.mode is not mode:
            raise ModeMismatchError(self.config.mode.value, mode.value)
        return mode

    def _recorded_data(
        self,
        ctx: ExperimentContext,
        mode: CalibrationMode,
        indices: np.ndarray,
        chain: Chain,
    ) -> CalibrationData:
        data = self.calibration_data(ctx, mode, indices)
        recorded = chain.meta.get("standardizer")
        if recorded:
            data = CalibrationData(data.xi, data.z, Standardizer(**recorded))
        return data

    def _synthetic(self, mode: CalibrationMode) -> SyntheticDataset | None:
        if not mode.uses_surrogate:
            return None
        self.config.require("synthetic")
        return load_synthetic(self.config.synthetic)  # type: ignore[arg-type]

    def _write_curve(
        self,
        ctx: ExperimentContext,
        name: str,
        xi: np.ndarray,
        mean: np.ndarray,
        sd: np.ndarray,
    ) -> Path:
        c = ctx.consts.c_sat
        return write_table(
            self.out / name,
            {"x": self._physical(ctx, xi), "mean": mean * c, "sd": sd * c},
        )

    def _band(self, ctx: ExperimentContext, chain: Chain, data: CalibrationData) -> Path:
        cfg = self.config
        n_draws = min(cfg.n_draws, chain.n_steps * chain.n_walkers)
        band = predictive_band(
            chain, data, ctx.model.eta_scaled, ctx.grid.xi, n_draws, cfg.seed, cfg.threads
        )
        c = ctx.consts.c_sat
        return write_table(
            self.out / "band.csv",
            {
                "x": ctx.grid.x,
                "mean": band.mean * c,
                "sd": band.sd * c,
                "lower": band.lower * c,
                "upper": band.upper * c,
            },
        )


def cmd_simulate(config: RunConfig) -> dict[str, Path]:
    return CalibrationPipeline(config).simulate()


def cmd_design(config: RunConfig) -> dict[str, Path]:
    return CalibrationPipeline(config).design()


def cmd_calibrate(config: RunConfig) -> dict[str, Path]:
    return CalibrationPipeline(config).calibrate()


def cmd_analyze(config: RunConfig) -> dict[str, Path]:
    return CalibrationPipeline(config).analyze()


def cmd_predict(config: RunConfig) -> dict[str, Path]:
    return CalibrationPipeline(config).predict()
