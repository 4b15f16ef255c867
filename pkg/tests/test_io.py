"""
Unit tests for file formats and artifact persistence.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.exceptions import ConfigurationError, DataFileError
from app.models.data import SyntheticDataset
from app.models.physics import FixedConstants
from app.models.results import Chain
from app.utils.chain_io import export_chain_csv, load_chain, save_chain
from app.utils.data_io import (
    load_synthetic,
    read_constants,
    read_kv_file,
    read_profile,
    save_synthetic,
    write_profile,
)
from app.utils.fs import atomic_write, to_json


def sample_chain() -> Chain:
    rng = np.random.default_rng(0)
    return Chain(
        samples=rng.normal(size=(4, 3, 2)),
        log_post=rng.normal(size=(4, 3)),
        acceptance=np.array([0.2, 0.3, 0.4]),
        param_names=["tau_n", "sigma"],
        meta={"mode": "bi", "data_indices": [0, 2, 5], "seed": 3},
    )


class TestKeyValueFiles:
    """Test cases for key-value files."""

    def test_parse(self, tmp_path):
        """Test comments, blank lines and overrides."""
        path = tmp_path / "run.cfg"
        path.write_text("# header\nmode = bcd\n\nseed = 3  # inline\nseed = 4\n")
        assert read_kv_file(path) == {"mode": "bcd", "seed": "4"}

    def test_malformed_line(self, tmp_path):
        """Test a line without '=' names the file and line."""
        path = tmp_path / "run.cfg"
        path.write_text("mode = bi\nbroken\n")
        with pytest.raises(DataFileError) as exc_info:
            read_kv_file(path)
        assert ":2:" in str(exc_info.value)

    def test_missing_file(self, tmp_path):
        """Test a missing file raises with its path."""
        with pytest.raises(DataFileError) as exc_info:
            read_kv_file(tmp_path / "absent.cfg")
        assert exc_info.value.details["file_path"].endswith("absent.cfg")

    def test_constants(self, tmp_path):
        """Test constants override defaults and unknown names are rejected."""
        path = tmp_path / "constants.txt"
        path.write_text("L = 1.5\nc_sat = 2e6\n")
        consts = read_constants(path)
        assert consts.L == 1.5
        assert consts.c_sat == 2e6
        assert consts.D_n == FixedConstants().D_n

        path.write_text("L = 1.5\nbogus = 1\n")
        with pytest.raises(ConfigurationError) as exc_info:
            read_constants(path)
        assert exc_info.value.details["key"] == "bogus"

    def test_invalid_constant(self, tmp_path):
        """Test nonpositive constants are rejected."""
        path = tmp_path / "constants.txt"
        path.write_text("L = -1\n")
        with pytest.raises(ConfigurationError):
            read_constants(path)

    def test_default_constants(self):
        """Test no file means literature defaults."""
        assert read_constants(None) == FixedConstants()


class TestProfiles:
    """Test cases for profile CSV files."""

    def test_normalized_flag(self, tmp_path, consts):
        """Test a normalized profile is scaled by c_sat on read."""
        path = write_profile(tmp_path / "u.csv", [0.0, 1.0], [0.5, 0.25], normalized=True)
        profile = read_profile(path, consts)
        np.testing.assert_allclose(profile.u, [0.5 * consts.c_sat, 0.25 * consts.c_sat])

    def test_physical_units(self, tmp_path, consts):
        """Test unflagged profiles are read as physical densities."""
        path = tmp_path / "u.csv"
        path.write_text("x,u\n0.0,1e5\n2.0,3e5\n")
        np.testing.assert_allclose(read_profile(path, consts).u, [1e5, 3e5])

    def test_sorted_by_x(self, tmp_path, consts):
        """Test rows come back in increasing x."""
        path = write_profile(tmp_path / "u.csv", [1.0, 0.0, 0.5], [3.0, 1.0, 2.0])
        profile = read_profile(path, consts)
        np.testing.assert_array_equal(profile.x, [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(profile.u, [1.0, 2.0, 3.0])

    def test_bad_header(self, tmp_path, consts):
        """Test a wrong header reports the expected one."""
        path = tmp_path / "u.csv"
        path.write_text("pos,density\n0,1\n")
        with pytest.raises(DataFileError) as exc_info:
            read_profile(path, consts)
        assert exc_info.value.details["expected_header"] == "x,u"

    def test_non_numeric(self, tmp_path, consts):
        """Test non-numeric entries are rejected."""
        path = tmp_path / "u.csv"
        path.write_text("x,u\n0,abc\n")
        with pytest.raises(DataFileError):
            read_profile(path, consts)


class TestSynthetic:
    """Test cases for synthetic dataset files."""

    def test_save_load(self, tmp_path):
        """Test records and provenance survive a save/load cycle."""
        synth = SyntheticDataset(
            x=np.array([0.1, 0.7]),
            theta=np.array([[1.0, 2.0, 3.0, 4.0], [0.5, 0.6, 0.7, 0.8]]),
            y=np.array([0.3, 0.2]),
            provenance={"seed": 4, "pool": 2},
        )
        path = save_synthetic(tmp_path / "synthetic.csv", synth)
        loaded = load_synthetic(path)
        np.testing.assert_array_equal(loaded.theta, synth.theta)
        np.testing.assert_array_equal(loaded.y, synth.y)
        assert loaded.provenance == {"seed": 4, "pool": 2}

    def test_missing_sidecar(self, tmp_path):
        """Test a CSV without sidecar loads with empty provenance."""
        path = tmp_path / "synthetic.csv"
        path.write_text("x,theta1,theta2,theta3,theta4,y\n0.5,1,1,1,1,0.2\n")
        loaded = load_synthetic(path)
        assert len(loaded) == 1
        assert loaded.provenance == {}

    def test_non_finite_output(self, tmp_path):
        """Test non-finite outputs are rejected."""
        path = tmp_path / "synthetic.csv"
        path.write_text("x,theta1,theta2,theta3,theta4,y\n0.5,1,1,1,1,inf\n")
        with pytest.raises(DataFileError):
            load_synthetic(path)


class TestChainFiles:
    """Test cases for the binary chain format."""

    def test_save_load(self, tmp_path):
        """Test arrays and metadata are restored exactly."""
        chain = sample_chain()
        loaded = load_chain(save_chain(tmp_path / "chain.bin", chain))
        np.testing.assert_array_equal(loaded.samples, chain.samples)
        np.testing.assert_array_equal(loaded.log_post, chain.log_post)
        np.testing.assert_array_equal(loaded.acceptance, chain.acceptance)
        assert loaded.param_names == chain.param_names
        assert loaded.meta == chain.meta
        assert loaded.mode == "bi"

    def test_truncated(self, tmp_path):
        """Test a truncated file is detected."""
        path = save_chain(tmp_path / "chain.bin", sample_chain())
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataFileError) as exc_info:
            load_chain(path)
        assert "expected" in str(exc_info.value)

    def test_not_a_chain(self, tmp_path):
        """Test foreign files are rejected by their magic bytes."""
        path = tmp_path / "chain.bin"
        path.write_bytes(b"NOTCHAIN" + bytes(16))
        with pytest.raises(DataFileError):
            load_chain(path)

    def test_export_csv(self, tmp_path):
        """Test one row per (step, walker) in step-major order."""
        chain = sample_chain()
        frame = pd.read_csv(export_chain_csv(tmp_path / "chain.csv", chain))
        assert list(frame.columns) == ["step", "walker", "log_post", "tau_n", "sigma"]
        assert len(frame) == 12
        assert frame["walker"].tolist()[:4] == [0, 1, 2, 0]
        np.testing.assert_allclose(frame["sigma"], chain.samples[..., 1].reshape(-1))

    def test_export_transformed(self, tmp_path):
        """Test exporting replacement values of the same shape."""
        chain = sample_chain()
        frame = pd.read_csv(
            export_chain_csv(tmp_path / "chain.csv", chain, np.exp(chain.samples))
        )
        np.testing.assert_allclose(frame["tau_n"], np.exp(chain.samples[..., 0]).reshape(-1))


class TestFilesystem:
    """Test cases for artifact writing helpers."""

    def test_atomic_write_failure_leaves_nothing(self, tmp_path):
        """Test a failing writer leaves neither target nor temporary file."""

        def writer(tmp):
            tmp.write_text("partial")
            raise RuntimeError("interrupted")

        with pytest.raises(RuntimeError):
            atomic_write(tmp_path / "out.json", writer)
        assert list(tmp_path.iterdir()) == []

    def test_to_json_numpy(self):
        """Test numpy values and paths serialize deterministically."""
        text = to_json({"b": np.float64(1.5), "a": np.arange(3), "p": Path("out") / "x"})
        assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5, "p": "out/x"}
        assert text.index('"a"') < text.index('"b"')
