"""Writer/reader for the SEMB vector format.

Little-endian: magic ``SEMB`` | u32 version=1 | u32 dim | u64 count |
count*dim float32 row-major. A container file carries a JSON sidecar
``<name>.semb.idx`` mapping doc_id -> [row_start, row_count]. This mirrors
the format the composition toolkit consumes; the file layout is the
interface between the two packages.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class SembError(Exception):
    pass


def write_matrix(path: str | Path, values: np.ndarray):
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2 or values.shape[1] == 0:
        raise SembError(f"expected a 2-D matrix with dim > 0, got shape {values.shape}")
    if values.size and not np.all(np.isfinite(values)):
        raise SembError("refusing to write NaN/Inf values")
    header = _HEADER.pack(MAGIC, VERSION, values.shape[1], values.shape[0])
    Path(path).write_bytes(header + values.tobytes())


def write_container(path: str | Path, matrices: dict[str, np.ndarray]):
    """Concatenated matrices plus the doc_id -> row-range sidecar."""
    path = Path(path)
    if path.suffix != ".semb":
        raise SembError(f"container path must end in .semb, got {path.name}")
    index = {}
    row = 0
    blocks = []
    for doc_id, values in matrices.items():
        values = np.ascontiguousarray(values, dtype="<f4")
        index[doc_id] = [row, values.shape[0]]
        blocks.append(values)
        row += values.shape[0]
    write_matrix(path, np.vstack(blocks))
    path.with_name(path.name + ".idx").write_text(json.dumps(index), encoding="utf-8")


def read_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SembError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise SembError(f"{path}: not a version-{VERSION} SEMB file")
    expected = _HEADER.size + count * dim * 4
    if len(data) != expected:
        raise SembError(f"{path}: expected {expected} bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
