"""Binary sentence-embedding storage (SEMB files), PCA reduction, normalization.

SEMB layout, little-endian: magic ``SEMB`` | u32 version=1 | u32 dim |
u64 count | count*dim IEEE-754 float32, row-major. A file stores one matrix;
a directory holds one ``<doc_id>.semb`` per document; a concatenated
container ``<name>.semb`` carries a JSON sidecar ``<name>.semb.idx`` mapping
doc_id -> [row_start, row_count].
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError, ValidationError

SEMB_MAGIC = b"SEMB"
SEMB_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@dataclass(eq=False)
class EmbeddingMatrix:
    """A count x dim matrix of vectors, row i belonging to sentence i.

    Values are float32 on disk; reductions elsewhere in the package
    accumulate in float64. Treated as immutable once constructed.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValidationError(f"embedding matrix must be 2-D, got shape {values.shape}")
        if values.shape[1] == 0:
            raise ValidationError("embedding matrix must have dim > 0")
        if not np.issubdtype(values.dtype, np.floating):
            values = values.astype(np.float32)
        if values.size and not np.all(np.isfinite(values)):
            raise ValidationError("embedding matrix contains NaN or Inf")
        self.values = values

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def l2_normalize(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale to unit L2 norm; vectors with norm <= eps are returned unchanged.

    Works on a single vector or row-wise on a matrix. Idempotent.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = norm > eps
    return np.where(safe, v / np.where(safe, norm, 1.0), v)


def write_semb(path: str | Path, values: np.ndarray):
    """Write a single matrix as one SEMB file."""
    matrix = EmbeddingMatrix(values)
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    header = _HEADER.pack(SEMB_MAGIC, SEMB_VERSION, matrix.dim, matrix.count)
    Path(path).write_bytes(header + payload)


def read_semb(path: str | Path) -> np.ndarray:
    """Read one SEMB file; raises FormatError with a byte offset on bad files."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header", offset=len(data))
    magic, version, dim, count = _HEADER.unpack_from(data)
    if magic != SEMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != SEMB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    if dim == 0:
        raise ValidationError(f"{path}: dim=0 in header")
    expected = _HEADER.size + count * dim * 4
    if len(data) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {count}x{dim}, got {len(data)}",
            offset=min(len(data), expected),
        )
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    if values.size and not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: payload contains NaN or Inf")
    return values


def _index_path(container: Path) -> Path:
    return container.with_name(container.name + ".idx")


def store_embeddings(embeddings: Mapping[str, EmbeddingMatrix], path: str | Path):
    """Store a doc_id -> matrix mapping.

    A path ending in ``.semb`` becomes a concatenated container with a JSON
    index sidecar; any other path is treated as a directory of per-document
    files. Round-trips losslessly through :func:`load_embeddings`.
    """
    path = Path(path)
    if path.suffix == ".semb":
        _store_container(embeddings, path)
    else:
        path.mkdir(parents=True, exist_ok=True)
        for doc_id, matrix in embeddings.items():
            if "/" in doc_id or "\\" in doc_id or doc_id in {".", ".."}:
                raise ValidationError(
                    f"doc_id {doc_id!r} is not a safe filename; use a container file"
                )
            write_semb(path / f"{doc_id}.semb", matrix.values)


def _store_container(embeddings: Mapping[str, EmbeddingMatrix], path: Path):
    dims = {m.dim for m in embeddings.values()}
    if len(dims) > 1:
        raise ValidationError(f"container requires a single dim, got {sorted(dims)}")
    index: dict[str, list[int]] = {}
    blocks = []
    row = 0
    for doc_id, matrix in embeddings.items():
        index[doc_id] = [row, matrix.count]
        blocks.append(np.ascontiguousarray(matrix.values, dtype="<f4"))
        row += matrix.count
    dim = dims.pop() if dims else 0
    if dim == 0:
        raise ValidationError("cannot store an empty embedding map")
    stacked = np.vstack(blocks) if blocks else np.zeros((0, dim), dtype="<f4")
    write_semb(path, stacked)
    _index_path(path).write_text(json.dumps(index), encoding="utf-8")


def load_embeddings(path: str | Path) -> dict[str, EmbeddingMatrix]:
    """Load a doc_id -> matrix mapping from a directory, container, or file.

    Inverse of :func:`store_embeddings`; a bare ``.semb`` file without a
    sidecar loads under its filename stem.
    """
    path = Path(path)
    if path.is_dir():
        out = {}
        for file in sorted(path.glob("*.semb")):
            out[file.stem] = EmbeddingMatrix(read_semb(file))
        return out
    if not path.exists():
        raise FormatError(f"{path}: no such file or directory")
    index_path = _index_path(path)
    values = read_semb(path)
    if not index_path.exists():
        return {path.stem: EmbeddingMatrix(values)}
    index = json.loads(index_path.read_text(encoding="utf-8"))
    out = {}
    for doc_id, (row_start, row_count) in index.items():
        if row_start < 0 or row_start + row_count > values.shape[0]:
            raise FormatError(f"{index_path}: index entry {doc_id!r} out of bounds")
        out[doc_id] = EmbeddingMatrix(values[row_start : row_start + row_count])
    return out


@dataclass(eq=False)
class PcaModel:
    """Mean vector plus top-k principal directions (orthonormal rows)."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def save(self, path: str | Path):
        np.savez(
            path,
            mean=self.mean,
            components=self.components,
            explained_variance=self.explained_variance,
        )

    @classmethod
    def load(cls, path: str | Path) -> "PcaModel":
        with np.load(path) as data:
            return cls(
                mean=data["mean"],
                components=data["components"],
                explained_variance=data["explained_variance"],
            )


def pca_fit(pool: EmbeddingMatrix, k: int = 128) -> PcaModel:
    """Fit the top-k principal directions of the mean-centered pool.

    Deterministic (dense SVD, sign fixed so each component's largest-magnitude
    entry is positive). No whitening.
    """
    x = pool.values.astype(np.float64)
    n, d = x.shape
    if k > d:
        raise ValidationError(f"k={k} exceeds dimensionality {d}")
    if n < k:
        raise ValidationError(f"insufficient samples: {n} < k={k}")
    mean = x.mean(axis=0)
    _, singular, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:k]
    flip = np.sign(components[np.arange(k), np.argmax(np.abs(components), axis=1)])
    flip[flip == 0] = 1.0
    components = components * flip[:, None]
    explained = singular[:k] ** 2 / max(n - 1, 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def pca_apply(model: PcaModel, m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Project rows onto the principal directions: components @ (row - mean)."""
    if m.dim != model.d:
        raise ValidationError(f"dim mismatch: matrix has {m.dim}, model expects {model.d}")
    projected = (m.values.astype(np.float64) - model.mean) @ model.components.T
    return EmbeddingMatrix(projected)
