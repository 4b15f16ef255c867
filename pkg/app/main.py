"""
Command-line entry point for the GBM calibration toolkit.

Subcommands: simulate, design, calibrate, analyze, predict. Settings come
from an optional ``--config`` key-value file, overridden by flags.
"""

import argparse
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

from loguru import logger

from app.config import settings
from app.configs.run import RunConfig
from app.exceptions import BaseServiceError
from app.services.pipeline import (
    cmd_analyze,
    cmd_calibrate,
    cmd_design,
    cmd_predict,
    cmd_simulate,
)

COMMANDS: dict[str, Callable[[RunConfig], dict[str, Path]]] = {
    "simulate": cmd_simulate,
    "design": cmd_design,
    "calibrate": cmd_calibrate,
    "analyze": cmd_analyze,
    "predict": cmd_predict,
}

# Flags that map one-to-one onto RunConfig fields.
PATH_FLAGS = (
    "data",
    "initial",
    "initial_dead",
    "constants",
    "synthetic",
    "chain",
    "resume",
    "out",
)
INT_FLAGS = (
    "seed",
    "threads",
    "thin",
    "n_obs",
    "n_samples",
    "n_walkers",
    "n_nodes",
    "n_draws",
)


def setup_logging(level: str | None = None) -> None:
    """
    Configure logging with loguru.
    """
    level = (level or settings.LOG_LEVEL).upper()
    logger.remove()  # Remove default handler

    logger.add(
        sys.stderr,
        format=(
            "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
            "<level>{level: <8}</level> | "
            "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
            "<level>{message}</level>"
        ),
        level=level,
        colorize=True,
    )

    if settings.ENVIRONMENT == "production":
        log_dir = Path(settings.LOG_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)

        logger.add(
            log_dir / "gbm-calibrate.log",
            rotation="1 day",
            retention="30 days",
            level=level,
            format=(
                "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | "
                "{name}:{function}:{line} - {message}"
            ),
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbm-calibrate",
        description="Glioblastoma progression model and Bayesian calibration",
    )
    parser.add_argument("--version", action="version", version=settings.VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Key-value configuration file")
    common.add_argument("--mode", choices=["bi", "bce", "bcd", "bced"])
    common.add_argument("--preset", choices=["paper", "full", "desk"])
    common.add_argument("--log-level", dest="log_level")
    for name in PATH_FLAGS:
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=Path)
    for name in INT_FLAGS:
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    common.add_argument("--noise-sd", dest="noise_sd", type=float)
    common.add_argument(
        "--theta",
        type=float,
        nargs=4,
        metavar=("TAU_N", "CHI", "B", "J"),
        help="Physical parameters for simulate",
    )

    helps = {
        "simulate": "Solve the forward model at a parameter vector",
        "design": "Select experimental points and build synthetic data",
        "calibrate": "Sample the posterior of one calibration mode",
        "analyze": "Summaries, errors, discrepancy and corner data for a chain",
        "predict": "Posterior predictive band from a chain",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def overrides_from(args: argparse.Namespace) -> dict[str, Any]:
    """RunConfig overrides from parsed flags; unset flags are dropped."""
    keys = (*PATH_FLAGS, *INT_FLAGS, "mode", "preset", "noise_sd", "theta")
    values = {key: getattr(args, key, None) for key in keys}
    return {k: v for k, v in values.items() if v is not None}


def main(argv: list[str] | None = None) -> int:
    """
    Run one subcommand.

    Returns:
        Process exit code: 0 on success, the error's exit code otherwise
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = RunConfig.load(args.config, overrides_from(args))
        logger.info(f"Running '{args.command}' into {config.out}")
        written = COMMANDS[args.command](config)
    except BaseServiceError as exc:
        logger.error(f"{exc.error_type}: {exc}")
        if exc.details:
            logger.debug(f"Details: {exc.details}")
        return exc.exit_code
    for label, path in written.items():
        logger.info(f"Wrote {label}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
