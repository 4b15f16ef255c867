"""
Results bundle and Markdown report writer.
"""

from pathlib import Path
from typing import Any

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined
from loguru import logger

from app.config import settings
from app.models.results import PosteriorSummary
from app.services.analysis import CornerData
from app.utils.data_io import write_table
from app.utils.fs import ensure_directory, write_json, write_text

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"
REPORT_TEMPLATE = "report.md.j2"


def _environment() -> Environment:
    return Environment(
        loader=FileSystemLoader(str(TEMPLATES_DIR)),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


def render_report(
    mode: str,
    config: dict[str, Any],
    summary: PosteriorSummary,
    errors: dict[str, float],
    artifacts: list[str],
    wave_speed: float | None = None,
    comparison: dict[str, dict[str, float]] | None = None,
) -> str:
    """Render the Markdown run report."""
    template = _environment().get_template(REPORT_TEMPLATE)
    return template.render(
        app_name=settings.APP_NAME,
        version=settings.VERSION,
        mode=mode,
        config=config,
        summary=summary,
        errors=errors,
        artifacts=artifacts,
        wave_speed=wave_speed,
        comparison=comparison,
    )


def write_corner(out_dir: Path, corner: CornerData) -> list[Path]:
    """
    Write corner-plot data as CSV files.

    One ``marginal_<name>.csv`` per parameter (bin bounds and counts) and one
    ``pair_<a>__<b>.csv`` per parameter pair in long format.
    """
    ensure_directory(out_dir)
    written = []
    for m in corner.marginals:
        written.append(
            write_table(
                out_dir / f"marginal_{m.name}.csv",
                {"lower": m.edges[:-1], "upper": m.edges[1:], "count": m.counts},
            )
        )
    for p in corner.pairs:
        a_lo, b_lo = np.meshgrid(p.first_edges[:-1], p.second_edges[:-1], indexing="ij")
        a_hi, b_hi = np.meshgrid(p.first_edges[1:], p.second_edges[1:], indexing="ij")
        written.append(
            write_table(
                out_dir / f"pair_{p.first}__{p.second}.csv",
                {
                    f"{p.first}_lower": a_lo.ravel(),
                    f"{p.first}_upper": a_hi.ravel(),
                    f"{p.second}_lower": b_lo.ravel(),
                    f"{p.second}_upper": b_hi.ravel(),
                    "count": p.counts.ravel(),
                },
            )
        )
    markers = {m.name: {"map": m.map, "mean": m.mean} for m in corner.marginals}
    written.append(write_json(out_dir / "markers.json", markers))
    logger.info(f"Corner data: {len(written)} files in {out_dir}")
    return written


def write_bundle(
    out_dir: Path,
    results: dict[str, Any],
    report: str | None = None,
    name: str = "results",
) -> list[Path]:
    """Write the JSON summary and, when given, the rendered report."""
    written = [write_json(out_dir / f"{name}.json", results)]
    if report is not None:
        written.append(write_text(out_dir / "report.md", report))
    return written
