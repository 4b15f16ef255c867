"""
Chain persistence: a flat little-endian float64 payload behind a JSON header.

Layout::

    GBMCHAIN            8-byte magic
    <uint32 n>          header length
    <n bytes>           UTF-8 JSON header (shapes, names, meta)
    samples             steps * walkers * params float64, C order
    log_post            steps * walkers float64
    acceptance          walkers float64
"""

import json
import struct
from pathlib import Path

import numpy as np
from loguru import logger

from app.exceptions import DataFileError
from app.models.results import Chain
from app.utils.data_io import write_table
from app.utils.fs import atomic_write, to_json

MAGIC = b"GBMCHAIN"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def save_chain(path: str | Path, chain: Chain) -> Path:
    """Write ``chain`` to ``path``."""
    header = {
        "version": FORMAT_VERSION,
        "shape": list(chain.samples.shape),
        "param_names": chain.param_names,
        "meta": chain.meta,
    }
    header_bytes = to_json(header).encode("utf-8")

    def writer(tmp: Path) -> None:
        with open(tmp, "wb") as handle:
            handle.write(MAGIC)
            handle.write(struct.pack("<I", len(header_bytes)))
            handle.write(header_bytes)
            for array in (chain.samples, chain.log_post, chain.acceptance):
                handle.write(np.ascontiguousarray(array, dtype=_DTYPE).tobytes())

    atomic_write(path, writer)
    logger.info(f"Saved chain {chain.samples.shape} to {path}")
    return Path(path)


def load_chain(path: str | Path) -> Chain:
    """
    Read a chain written by ``save_chain``.

    Raises:
        DataFileError: If the file is missing, truncated or not a chain file
    """
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"Chain file not found: {path}", str(path))
    raw = path.read_bytes()
    if not raw.startswith(MAGIC) or len(raw) < len(MAGIC) + 4:
        raise DataFileError(f"{path} is not a chain file", str(path))
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFileError(f"{path}: corrupt chain header ({exc})", str(path)) from exc
    offset += header_len

    steps, walkers, params = (int(v) for v in header["shape"])
    sizes = (steps * walkers * params, steps * walkers, walkers)
    expected = offset + sum(sizes) * _DTYPE.itemsize
    if len(raw) != expected:
        raise DataFileError(
            f"{path}: expected {expected} bytes, found {len(raw)}", str(path)
        )
    arrays = []
    for size in sizes:
        arrays.append(np.frombuffer(raw, dtype=_DTYPE, count=size, offset=offset).copy())
        offset += size * _DTYPE.itemsize

    return Chain(
        samples=arrays[0].reshape(steps, walkers, params),
        log_post=arrays[1].reshape(steps, walkers),
        acceptance=arrays[2],
        param_names=list(header["param_names"]),
        meta=dict(header.get("meta", {})),
    )


def export_chain_csv(
    path: str | Path, chain: Chain, values: np.ndarray | None = None
) -> Path:
    """
    Write one row per (step, walker) with ``log_post`` and parameter columns.

    Args:
        path: Destination CSV
        chain: Chain to export
        values: Optional replacement for the samples (e.g. natural units),
            same shape as ``chain.samples``
    """
    samples = chain.samples if values is None else np.asarray(values, dtype=float)
    steps, walkers = chain.log_post.shape
    columns: dict[str, np.ndarray] = {
        "step": np.repeat(np.arange(steps), walkers),
        "walker": np.tile(np.arange(walkers), steps),
        "log_post": chain.flat_log_post(),
    }
    flat = samples.reshape(-1, chain.n_params)
    for i, name in enumerate(chain.param_names):
        columns[name] = flat[:, i]
    return write_table(path, columns)
