"""Bilingual document alignment: top-K cosine retrieval, one-to-one matching
per webdomain (competitive linking), recall, and bootstrap confidence
intervals.

The default index is exact (normalized dot products over the full
collection); any approximate backend exposing the same ``search`` contract
can be swapped in.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .embed_store import l2_normalize
from .errors import ValidationError

DEFAULT_TOP_K = 32


@dataclass(eq=False)
class ExactIndex:
    """Exact cosine top-K retrieval over a fixed collection.

    Ties are broken by lexicographic doc_id, which the constructor
    guarantees by sorting ids up front and using a stable ranking sort.
    """

    ids: list[str]
    matrix: np.ndarray  # row-normalized, aligned to ids

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def search(self, query: np.ndarray, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
        query = np.asarray(query, dtype=np.float64).ravel()
        if query.shape != (self.dim,):
            raise ValidationError(f"query has shape {query.shape}, index dim is {self.dim}")
        scores = self.matrix @ l2_normalize(query)
        top = np.argsort(-scores, kind="stable")[:k]
        return [(self.ids[i], float(scores[i])) for i in top]


def build_index(vectors: Mapping[str, np.ndarray]) -> ExactIndex:
    if not vectors:
        raise ValidationError("cannot index an empty collection")
    ids = sorted(vectors)
    rows = [np.asarray(vectors[i], dtype=np.float64).ravel() for i in ids]
    dims = {row.shape[0] for row in rows}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent vector dims: {sorted(dims)}")
    return ExactIndex(ids=ids, matrix=l2_normalize(np.vstack(rows)))


def topk(index: ExactIndex, query: np.ndarray, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
    """The K highest-cosine ids for the query (fewer if the collection is smaller)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return index.search(query, k)


@dataclass(eq=False)
class AlignmentResult:
    """One-to-one pairs per domain, scores descending within each domain."""

    pairs: list[tuple[str, str, float]]
    by_domain: dict[str | None, list[tuple[str, str, float]]]

    def predicted_pairs(self) -> set[tuple[str, str]]:
        return {(src, tgt) for src, tgt, _ in self.pairs}


def match(
    candidates: Mapping[str, Sequence[tuple[str, float]]],
    domains: Mapping[str, str] | None = None,
) -> AlignmentResult:
    """Greedy competitive linking over per-source candidate lists.

    Within each domain, edges are visited by descending score (ties broken by
    source then target id) and accepted when neither endpoint is matched yet.
    ``domains`` maps doc ids to group keys; without it the whole collection is
    one group. Candidate edges whose endpoints disagree on domain are ignored.
    """
    edges_by_domain: dict[str | None, list[tuple[float, str, str]]] = defaultdict(list)
    for src, cands in candidates.items():
        src_domain = domains.get(src) if domains else None
        for tgt, score in cands:
            if domains and domains.get(tgt) != src_domain:
                continue
            edges_by_domain[src_domain].append((score, src, tgt))

    by_domain: dict[str | None, list[tuple[str, str, float]]] = {}
    all_pairs: list[tuple[str, str, float]] = []
    for domain in sorted(edges_by_domain, key=lambda d: (d is None, d)):
        edges = edges_by_domain[domain]
        edges.sort(key=lambda e: (-e[0], e[1], e[2]))
        taken_src: set[str] = set()
        taken_tgt: set[str] = set()
        accepted: list[tuple[str, str, float]] = []
        for score, src, tgt in edges:
            if src in taken_src or tgt in taken_tgt:
                continue
            taken_src.add(src)
            taken_tgt.add(tgt)
            accepted.append((src, tgt, score))
        by_domain[domain] = accepted
        all_pairs.extend(accepted)
    return AlignmentResult(pairs=all_pairs, by_domain=by_domain)


def recall(result: AlignmentResult, gold: set[tuple[str, str]]) -> float:
    """Fraction of gold pairs recovered by the matching."""
    if not gold:
        raise ValidationError("gold pair set is empty")
    return len(result.predicted_pairs() & set(gold)) / len(gold)


@dataclass(frozen=True)
class BootstrapCI:
    """Point estimate with percentile-interval deltas, as reported in tables."""

    point: float
    lower_delta: float
    upper_delta: float

    @property
    def low(self) -> float:
        return self.point - self.lower_delta

    @property
    def high(self) -> float:
        return self.point + self.upper_delta

    def formatted(self, scale: float = 100.0, digits: int = 1) -> str:
        return (
            f"{self.point * scale:.{digits}f}"
            f"^{{+{self.upper_delta * scale:.{digits}f}}}"
            f"_{{-{self.lower_delta * scale:.{digits}f}}}"
        )


def bootstrap_ci(
    metric_fn: Callable[[list], float],
    items: Sequence,
    n_samples: int,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapCI:
    """Percentile bootstrap over resampled item sets; deterministic per seed.

    ``metric_fn`` receives a resample (same type of elements as ``items``)
    and returns the metric. The point estimate is the metric on the full set;
    deltas are distances to the level's percentile bounds.
    """
    if n_samples < 100:
        raise ValidationError("need at least 100 bootstrap samples")
    if not items:
        raise ValidationError("cannot bootstrap over an empty item set")
    items = list(items)
    n = len(items)
    rng = np.random.default_rng(seed)
    point = float(metric_fn(items))
    values = np.empty(n_samples)
    for s in range(n_samples):
        idx = rng.integers(0, n, size=n)
        values[s] = metric_fn([items[i] for i in idx])
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(values, [tail, 100.0 - tail])
    return BootstrapCI(point=point, lower_delta=point - float(low), upper_delta=float(high) - point)
