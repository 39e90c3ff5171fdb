"""Per-sentence scalar weights (uniform, half masks, TF-IDF) and weighted pooling.

TF-IDF follows the augmented-frequency family: raw term frequency, the
0.4/0.6 augmented variant, and log(1 + |D|/df) inverse document frequency.
A sentence's score is the average of its tokens' tf*idf values.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import CollectionStats, Document, Sentence, split_halves
from .embed_store import EmbeddingMatrix
from .errors import ValidationError

TF_VARIANTS = ("tf2", "tf4")
WEIGHT_SCHEMES = ("uniform", "top-half", "bottom-half", "tfidf")


@dataclass
class WeightVector:
    """Nonnegative per-sentence weights aligned to a document's sentences."""

    weights: np.ndarray
    scheme_tag: str

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1:
            raise ValidationError("weights must be a 1-D vector")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationError("weights must be finite and >= 0")
        self.weights = weights

    def __len__(self) -> int:
        return len(self.weights)


def tf2(word: str, doc: Document) -> float:
    """Raw frequency of the word among all word tokens of the document."""
    return float(doc.word_counts()[word])


def tf4(word: str, doc: Document) -> float:
    """Augmented frequency: 0.4 + 0.6 * freq / max-freq, 0.4 for absent words."""
    counts = doc.word_counts()
    return _tf4_from_counts(word, counts)


def _tf4_from_counts(word: str, counts: Counter) -> float:
    max_freq = max(counts.values(), default=0)
    if max_freq == 0:
        return 0.4
    return 0.4 + 0.6 * counts[word] / max_freq


def idf4(word: str, stats: CollectionStats) -> float:
    """ln(1 + |D| / df); unseen words fall back to df=1."""
    if stats.n_docs < 1:
        raise ValidationError("idf requires a collection with at least one document")
    df = stats.doc_freq.get(word, 0)
    if df == 0:
        df = 1
    return math.log(1.0 + stats.n_docs / df)


def sentence_tfidf(
    sentence: Sentence,
    doc: Document,
    stats: CollectionStats,
    tf_variant: str = "tf4",
) -> float:
    """Average tf*idf over the sentence's word tokens; 0 for wordless sentences."""
    _check_tf_variant(tf_variant)
    if not sentence.words:
        return 0.0
    counts = doc.word_counts()
    total = 0.0
    for word in sentence.words:
        tf = counts[word] if tf_variant == "tf2" else _tf4_from_counts(word, counts)
        total += tf * idf4(word, stats)
    return total / len(sentence.words)


def tfidf_scores(doc: Document, stats: CollectionStats, tf_variant: str = "tf4") -> np.ndarray:
    """Per-sentence TF-IDF averages for a whole document (single counting pass)."""
    _check_tf_variant(tf_variant)
    counts = doc.word_counts()
    max_freq = max(counts.values(), default=0)
    scores = np.zeros(doc.n_sentences)
    for i, sentence in enumerate(doc.sentences):
        if not sentence.words:
            continue
        total = 0.0
        for word in sentence.words:
            if tf_variant == "tf2":
                tf = counts[word]
            else:
                tf = 0.4 if max_freq == 0 else 0.4 + 0.6 * counts[word] / max_freq
            total += tf * idf4(word, stats)
        scores[i] = total / len(sentence.words)
    return scores


def _check_tf_variant(tf_variant: str):
    if tf_variant not in TF_VARIANTS:
        raise ValidationError(f"unknown tf variant {tf_variant!r}; expected one of {TF_VARIANTS}")


def make_weights(
    doc: Document,
    scheme: str,
    stats: CollectionStats | None = None,
    tf_variant: str = "tf4",
    normalization: str = "sum",
) -> WeightVector:
    """Build a per-sentence weight vector under the given scheme.

    Uniform spreads 1/N; top-half/bottom-half spread 1/|half| over the half
    (a single-sentence document has an empty bottom half, giving an all-zero
    vector). TF-IDF weights are the per-sentence averages normalized to sum
    to 1 (``normalization="max"`` divides by the maximum score instead); an
    all-zero TF-IDF document falls back to uniform.
    """
    n = doc.n_sentences
    if scheme == "uniform":
        return WeightVector(np.full(n, 1.0 / n), "uniform")
    if scheme in ("top-half", "bottom-half"):
        top, bottom = split_halves(doc)
        half = top if scheme == "top-half" else bottom
        weights = np.zeros(n)
        if half:
            weights[sorted(half)] = 1.0 / len(half)
        return WeightVector(weights, scheme)
    if scheme == "tfidf":
        if stats is None:
            raise ValidationError("tfidf weighting requires collection statistics")
        scores = tfidf_scores(doc, stats, tf_variant)
        total = scores.sum()
        if total <= 0:
            return WeightVector(np.full(n, 1.0 / n), "uniform")
        if normalization == "sum":
            return WeightVector(scores / total, f"tfidf-{tf_variant}")
        if normalization == "max":
            return WeightVector(scores / scores.max(), f"tfidf-{tf_variant}-max")
        raise ValidationError(f"unknown normalization {normalization!r}")
    raise ValidationError(f"unknown weighting scheme {scheme!r}; expected one of {WEIGHT_SCHEMES}")


def pool_weighted(embs: EmbeddingMatrix, w: WeightVector) -> np.ndarray:
    """Weighted sum of sentence embeddings (float64 accumulation)."""
    if embs.count != len(w):
        raise ValidationError(
            f"length mismatch: {embs.count} embedding rows vs {len(w)} weights"
        )
    return w.weights @ embs.values.astype(np.float64)
