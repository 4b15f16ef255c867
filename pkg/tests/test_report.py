"""
Unit tests for the results bundle and Markdown report.
"""

import json

import numpy as np
import pandas as pd

from app.models.results import ParameterSummary, PosteriorSummary
from app.services.analysis import corner_export
from app.services.report import render_report, write_bundle, write_corner


def make_summary() -> PosteriorSummary:
    return PosteriorSummary(
        parameters=[
            ParameterSummary(
                name="tau_n", map=6.5e5, mean=6.6e5, median=6.6e5, lower=6e5, upper=7e5
            ),
            ParameterSummary(
                name="sigma", map=0.01, mean=0.011, median=0.011, lower=0.009, upper=0.013
            ),
        ],
        correlation=[[1.0, 0.2], [0.2, 1.0]],
        map_index=3,
        map_log_post=12.5,
        n_samples=400,
        acceptance_mean=0.31,
        r_hat=[1.01, 1.02],
    )


class TestReport:
    """Test cases for report rendering."""

    def test_render(self):
        """Test the report lists parameters, errors and artifacts."""
        config = {"n_walkers": 16, "n_samples": 8000, "burn_in": 0.2, "seed": 0, "n_nodes": 100}
        text = render_report(
            "bi", config, make_summary(), {"map": 0.0123}, ["band.csv"], wave_speed=2e-8
        )
        assert text.startswith("# Calibration report: BI")
        assert "| tau_n | 6.5e+05 |" in text
        assert "| map | 0.0123 |" in text
        assert "- `band.csv`" in text
        assert "Fisher wave speed" in text
        assert "16 x 8000" in text

    def test_render_without_speed(self):
        """Test the wave-speed line is omitted when not computed."""
        config = {"n_walkers": 16, "n_samples": 10, "burn_in": 0.2, "seed": 0, "n_nodes": 50}
        text = render_report("bce", config, make_summary(), {}, [])
        assert "Fisher wave speed" not in text

    def test_render_comparison(self):
        """Test the comparison table shows n/a where nothing was published."""
        config = {"n_walkers": 16, "n_samples": 10, "burn_in": 0.2, "seed": 0, "n_nodes": 50}
        comparison = {
            "tau_n": {"map": 6.4e5, "reference": 7.5e5, "published": 6.5e5},
            "chi": {"map": 8e-9, "reference": 7.5e-9},
        }
        text = render_report("bi", config, make_summary(), {}, [], comparison=comparison)
        assert "## Comparison with published estimates" in text
        assert "| tau_n | 6.4e+05 | 7.5e+05 | 6.5e+05 |" in text
        assert "| chi | 8e-09 | 7.5e-09 | n/a |" in text
        assert "Comparison" not in render_report("bi", config, make_summary(), {}, [])

    def test_bundle(self, tmp_path):
        """Test JSON results and report are written side by side."""
        paths = write_bundle(tmp_path, {"mode": "bi"}, "# report\n", name="analysis")
        assert [p.name for p in paths] == ["analysis.json", "report.md"]
        assert json.loads(paths[0].read_text()) == {"mode": "bi"}


class TestCornerFiles:
    """Test cases for corner-plot CSV output."""

    def test_files(self, tmp_path):
        """Test one marginal per parameter, one pair file and markers."""
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(200, 2))
        corner = corner_export(samples, ["a", "b"], -np.sum(samples**2, axis=1))
        paths = write_corner(tmp_path / "corner", corner)
        names = sorted(p.name for p in paths)
        assert names == ["marginal_a.csv", "marginal_b.csv", "markers.json", "pair_a__b.csv"]

        marginal = pd.read_csv(tmp_path / "corner" / "marginal_a.csv")
        assert marginal["count"].sum() == 200
        np.testing.assert_allclose(marginal["upper"].iloc[-1], samples[:, 0].max())

        pair = pd.read_csv(tmp_path / "corner" / "pair_a__b.csv")
        assert list(pair.columns) == ["a_lower", "a_upper", "b_lower", "b_upper", "count"]
        assert pair["count"].sum() == 200

        markers = json.loads((tmp_path / "corner" / "markers.json").read_text())
        assert set(markers) == {"a", "b"}
