"""Smooth positional windowing over sentence positions.

A document is covered by J overlapping windows. Window j peaks at relative
position (j + 0.5)/J and spans [peak - 1/J, peak + 1/J], shaped by a
modified-PERT (beta-family) density with shape parameter gamma. Densities
are cached on a fixed grid so composing a document costs one lookup per
sentence. The windowed compositions concatenate per-window weighted sums of
sentence embeddings, L2-normalized per window and scaled by 1/sqrt(J).
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .corpus import Document
from .embed_store import EmbeddingMatrix, l2_normalize
from .errors import ValidationError

DEFAULT_PARTS = 16
DEFAULT_GAMMA = 20.0
DEFAULT_RESOLUTION = 1024

# Per-document boilerplate weights: one value in (0, 1] per sentence.
BoilerplateWeights = np.ndarray


def pert_pdf(x, low: float, mode: float, high: float, gamma: float = DEFAULT_GAMMA):
    """Density of the modified-PERT distribution on [low, high].

    With span = high - low: alpha = 1 + gamma*(mode-low)/span,
    beta = 1 + gamma*(high-mode)/span, and
    pdf(x) = (x-low)^(alpha-1) (high-x)^(beta-1) / (B(alpha, beta) span^(alpha+beta-1)).
    Zero outside the support. Requires low < mode < high.
    """
    if not (low < mode < high):
        raise ValidationError(
            f"modified-PERT parameters must satisfy low < mode < high, "
            f"got ({low}, {mode}, {high})"
        )
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)

    span = high - low
    alpha = 1.0 + gamma * (mode - low) / span
    beta = 1.0 + gamma * (high - mode) / span
    out = np.zeros_like(arr)
    inside = (arr > low) & (arr < high)
    xs = arr[inside]
    log_pdf = (
        (alpha - 1.0) * np.log(xs - low)
        + (beta - 1.0) * np.log(high - xs)
        - betaln(alpha, beta)
        - (alpha + beta - 1.0) * np.log(span)
    )
    out[inside] = np.exp(log_pdf)
    return float(out[0]) if scalar else out


@dataclass(eq=False)
class PertWindowBank:
    """Cached window densities sampled on a uniform grid over [0, 1].

    The grid uses cell centers (r + 0.5)/resolution, which keeps interior
    windows exactly symmetric about their peaks at grid precision. Samples
    outside [0, 1] are simply never taken; edge windows lose the part of
    their support that sticks out.
    """

    parts: int
    gamma: float
    resolution: int
    grid: np.ndarray
    cache: np.ndarray
    modes: np.ndarray


def build_window_bank(
    parts: int = DEFAULT_PARTS,
    gamma: float = DEFAULT_GAMMA,
    resolution: int = DEFAULT_RESOLUTION,
) -> PertWindowBank:
    """Build the J x resolution density cache; bit-reproducible for fixed inputs."""
    if parts < 1:
        raise ValidationError("window bank needs at least one part")
    if resolution < 2:
        raise ValidationError("cache resolution must be >= 2")
    grid = (np.arange(resolution) + 0.5) / resolution
    modes = (np.arange(parts) + 0.5) / parts
    half_width = 1.0 / parts
    cache = np.zeros((parts, resolution))
    for j, mode in enumerate(modes):
        cache[j] = pert_pdf(grid, mode - half_width, mode, mode + half_width, gamma)
    return PertWindowBank(
        parts=parts,
        gamma=gamma,
        resolution=resolution,
        grid=grid,
        cache=cache,
        modes=modes,
    )


def window_weights(bank: PertWindowBank, n_sentences: int) -> np.ndarray:
    """Per-window positional weights for an N-sentence document (J x N).

    Sentence n sits at relative position (n + 0.5)/N and reads the nearest
    cached sample. Rows with positive mass are normalized to sum to 1; rows
    with no sentence in their support stay all-zero.
    """
    if n_sentences < 1:
        raise ValidationError("document must have at least one sentence")
    positions = (np.arange(n_sentences) + 0.5) / n_sentences
    idx = np.minimum((positions * bank.resolution).astype(int), bank.resolution - 1)
    weights = bank.cache[:, idx]
    sums = weights.sum(axis=1, keepdims=True)
    positive = sums > 0
    return np.where(positive, weights / np.where(positive, sums, 1.0), weights)


def boilerplate_weights(
    collection: list[Document], enabled: bool = True
) -> dict[str, BoilerplateWeights]:
    """Down-weight sentences repeated across a webdomain's documents.

    A sentence appearing verbatim on k pages of the document's domain gets
    weight 1/k. Disabled mode returns all ones. Documents without a
    domain_id are counted together as one group.
    """
    if not enabled:
        return {doc.doc_id: np.ones(doc.n_sentences) for doc in collection}
    by_domain: dict[str | None, list[Document]] = defaultdict(list)
    for doc in collection:
        by_domain[doc.domain_id].append(doc)
    out: dict[str, BoilerplateWeights] = {}
    for docs in by_domain.values():
        freq: Counter = Counter()
        for doc in docs:
            freq.update({s.text for s in doc.sentences})
        for doc in docs:
            out[doc.doc_id] = np.array([1.0 / freq[s.text] for s in doc.sentences])
    return out


def _windowed_concat(
    embs: EmbeddingMatrix, positional: np.ndarray, sentence_scale: np.ndarray | None
) -> np.ndarray:
    values = embs.values.astype(np.float64)
    coeff = positional if sentence_scale is None else positional * sentence_scale[None, :]
    subvectors = coeff @ values
    normalized = l2_normalize(subvectors)
    return (normalized / np.sqrt(positional.shape[0])).ravel()


def tk_pert(
    embs: EmbeddingMatrix,
    bank: PertWindowBank,
    boilerplate: BoilerplateWeights | None = None,
) -> np.ndarray:
    """Position-windowed document vector (J*d).

    Each window's weighted sum of sentence embeddings is L2-normalized and
    the J sub-vectors are concatenated with a 1/sqrt(J) scale, so the full
    vector has unit norm whenever every window is populated. Windows with no
    mass stay zero.
    """
    if embs.count < 1:
        raise ValidationError("cannot compose an empty document")
    scale = _sentence_scale(embs.count, boilerplate, None)
    return _windowed_concat(embs, window_weights(bank, embs.count), scale)


def tf_pert(
    embs: EmbeddingMatrix,
    bank: PertWindowBank,
    tfidf_scores: np.ndarray,
    boilerplate: BoilerplateWeights | None = None,
) -> np.ndarray:
    """Like :func:`tk_pert` with each sentence additionally scaled by its TF-IDF."""
    if embs.count < 1:
        raise ValidationError("cannot compose an empty document")
    scale = _sentence_scale(embs.count, boilerplate, tfidf_scores)
    return _windowed_concat(embs, window_weights(bank, embs.count), scale)


def _sentence_scale(
    count: int,
    boilerplate: BoilerplateWeights | None,
    tfidf_scores: np.ndarray | None,
) -> np.ndarray | None:
    scale = None
    if boilerplate is not None:
        boilerplate = np.asarray(boilerplate, dtype=np.float64)
        if boilerplate.shape != (count,):
            raise ValidationError(
                f"boilerplate weights have shape {boilerplate.shape}, expected ({count},)"
            )
        scale = boilerplate
    if tfidf_scores is not None:
        tfidf_scores = np.asarray(tfidf_scores, dtype=np.float64)
        if tfidf_scores.shape != (count,):
            raise ValidationError(
                f"tfidf scores have shape {tfidf_scores.shape}, expected ({count},)"
            )
        scale = tfidf_scores if scale is None else scale * tfidf_scores
    return scale
