"""
Readers and writers for the plain-text data formats.

Profiles are CSV files with header ``x,u``; an optional leading comment
``# normalized=true`` marks u as a fraction of c_sat. Constants and run
configurations are flat ``key = value`` files with ``#`` comments. Synthetic
datasets are a CSV plus a JSON sidecar holding their provenance.
"""

from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from app.exceptions import ConfigurationError, DataFileError
from app.models.data import SyntheticDataset
from app.models.physics import CellProfile, FixedConstants
from app.utils.fs import atomic_write, read_json, write_json

PROFILE_HEADER = ["x", "u"]
SYNTHETIC_HEADER = ["x", "theta1", "theta2", "theta3", "theta4", "y"]
NORMALIZED_FLAG = "normalized"


def read_kv_file(path: str | Path) -> dict[str, str]:
    """
    Parse a flat ``key = value`` file.

    Blank lines and text after ``#`` are ignored. Later keys override earlier
    ones.

    Raises:
        DataFileError: If the file is missing or a line has no ``=``
    """
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"File not found: {path}", str(path))
    values: dict[str, str] = {}
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFileError(
                f"{path}:{number}: expected 'key = value', got {raw.strip()!r}",
                str(path),
            )
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def read_constants(path: str | Path | None) -> FixedConstants:
    """FixedConstants from a key-value file; defaults when ``path`` is None."""
    if path is None:
        return FixedConstants()
    values = read_kv_file(path)
    unknown = sorted(set(values) - set(FixedConstants.model_fields))
    if unknown:
        raise ConfigurationError(
            f"Unknown constants in {path}: {', '.join(unknown)}", key=unknown[0]
        )
    try:
        return FixedConstants(**values)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid constants in {path}: {exc}") from exc


def _read_flags(path: Path) -> dict[str, str]:
    flags: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, value = (part.strip() for part in body.split("=", 1))
                flags[key.lower()] = value.lower()
    return flags


def _read_table(path: str | Path, header: list[str]) -> pd.DataFrame:
    path = Path(path)
    expected = ",".join(header)
    if not path.is_file():
        raise DataFileError(f"File not found: {path}", str(path), expected)
    try:
        frame = pd.read_csv(path, comment="#", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFileError(f"Cannot parse {path}: {exc}", str(path), expected) from exc
    columns = [str(c).strip() for c in frame.columns]
    if columns != header:
        raise DataFileError(
            f"{path}: expected header '{expected}', found '{','.join(columns)}'",
            str(path),
            expected,
        )
    frame.columns = header
    try:
        frame = frame.astype(float)
    except ValueError as exc:
        raise DataFileError(
            f"{path}: non-numeric entry ({exc})", str(path), expected
        ) from exc
    if frame.isna().any().any():
        raise DataFileError(f"{path}: missing values", str(path), expected)
    return frame


def read_profile(path: str | Path, consts: FixedConstants) -> CellProfile:
    """
    Read an ``x,u`` profile in physical units.

    Rows are sorted by x. When the file is flagged ``normalized=true``, u is
    multiplied by c_sat.

    Raises:
        DataFileError: On a missing file, bad header or invalid values
    """
    frame = _read_table(path, PROFILE_HEADER).sort_values("x", kind="stable")
    flags = _read_flags(Path(path))
    scale = consts.c_sat if flags.get(NORMALIZED_FLAG) == "true" else 1.0
    try:
        profile = CellProfile(x=frame["x"].to_numpy(), u=frame["u"].to_numpy() * scale)
    except ValueError as exc:
        raise DataFileError(
            f"{path}: {exc}", str(path), ",".join(PROFILE_HEADER)
        ) from exc
    logger.debug(f"Read {len(profile)} profile points from {path}")
    return profile


def write_profile(
    path: str | Path,
    x: np.ndarray,
    u: np.ndarray,
    normalized: bool = False,
) -> Path:
    """Write an ``x,u`` profile, recording whether u is normalized."""
    frame = pd.DataFrame(
        {"x": np.asarray(x, dtype=float), "u": np.asarray(u, dtype=float)}
    )

    def writer(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            handle.write(f"# {NORMALIZED_FLAG}={'true' if normalized else 'false'}\n")
            frame.to_csv(handle, index=False, float_format="%.17g")

    return atomic_write(path, writer)


def write_table(path: str | Path, columns: dict[str, np.ndarray]) -> Path:
    """Write equal-length numeric columns as CSV."""
    frame = pd.DataFrame({k: np.asarray(v) for k, v in columns.items()})
    return atomic_write(
        path, lambda tmp: frame.to_csv(tmp, index=False, float_format="%.17g")
    )


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_synthetic(path: str | Path, synth: SyntheticDataset) -> Path:
    """Write records as CSV and provenance as a JSON sidecar."""
    path = Path(path)
    if synth.theta.shape[1] != len(SYNTHETIC_HEADER) - 2:
        raise ValueError("Synthetic CSV format stores exactly four parameters")
    columns = {"x": synth.x}
    for i in range(synth.theta.shape[1]):
        columns[f"theta{i + 1}"] = synth.theta[:, i]
    columns["y"] = synth.y
    write_table(path, columns)
    write_json(_sidecar(path), synth.provenance)
    logger.info(f"Saved {len(synth)} synthetic records to {path}")
    return path


def load_synthetic(path: str | Path) -> SyntheticDataset:
    """
    Read a synthetic dataset written by ``save_synthetic``.

    Raises:
        DataFileError: On a bad header or values
    """
    path = Path(path)
    frame = _read_table(path, SYNTHETIC_HEADER)
    sidecar = _sidecar(path)
    provenance = read_json(sidecar) if sidecar.is_file() else {}
    try:
        return SyntheticDataset(
            x=frame["x"].to_numpy(),
            theta=frame[SYNTHETIC_HEADER[1:-1]].to_numpy(),
            y=frame["y"].to_numpy(),
            provenance=provenance,
        )
    except ValueError as exc:
        raise DataFileError(
            f"{path}: {exc}", str(path), ",".join(SYNTHETIC_HEADER)
        ) from exc
