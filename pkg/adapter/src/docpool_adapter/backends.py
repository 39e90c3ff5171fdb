"""Sentence-encoder backends.

Three pretrained multilingual families are wrapped: ``laser`` (LSTM-based,
long inputs up to 12000 tokens), ``labse`` and ``sbert`` (transformer-based,
510-token payload). Loading them requires the corresponding models locally;
the ``hashed`` backend is a deterministic offline stand-in that exercises
the full file pipeline in tests and dry runs without any model download.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class BackendUnavailable(Exception):
    """The requested encoder model cannot be loaded in this environment."""


@dataclass(frozen=True)
class EncoderSpec:
    """Static limits per backend family."""

    name: str
    max_tokens: int
    allows_full_document: bool


SPECS = {
    "laser": EncoderSpec("laser", max_tokens=12_000, allows_full_document=True),
    "labse": EncoderSpec("labse", max_tokens=510, allows_full_document=False),
    "sbert": EncoderSpec("sbert", max_tokens=510, allows_full_document=False),
    # Offline test backend: feature hashing, no model files needed.
    "hashed": EncoderSpec("hashed", max_tokens=510, allows_full_document=True),
}

_SBERT_DEFAULT = "sentence-transformers/paraphrase-multilingual-MiniLM-L12-v2"
_LABSE_DEFAULT = "sentence-transformers/LaBSE"


class EncoderBackend:
    """Minimal encoder interface: subword tokenization + batch embedding."""

    spec: EncoderSpec
    dim: int

    def tokenize(self, text: str) -> list:
        raise NotImplementedError

    def detokenize(self, tokens: list) -> str:
        raise NotImplementedError

    def count_tokens(self, text: str) -> int:
        return len(self.tokenize(text))

    def truncate(self, text: str, max_tokens: int) -> str:
        return self.detokenize(self.tokenize(text)[:max_tokens])

    def encode(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError


class HashedBackend(EncoderBackend):
    """Deterministic bag-of-hashed-tokens encoder.

    Each whitespace token maps to a fixed pseudo-random unit vector seeded
    from its hash; a text embeds as the normalized token-vector sum. Useful
    only for exercising the pipeline: the vectors carry lexical overlap, not
    meaning.
    """

    def __init__(self, dim: int = 32):
        self.spec = SPECS["hashed"]
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: list[str]) -> str:
        return " ".join(tokens)

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            cached = rng.standard_normal(self.dim)
            self._token_cache[token] = cached
        return cached

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            tokens = self.tokenize(text)
            if not tokens:
                continue
            acc = np.zeros(self.dim)
            for token in tokens:
                acc += self._token_vector(token)
            norm = np.linalg.norm(acc)
            if norm > 0:
                acc /= norm
            out[i] = acc.astype(np.float32)
        return out


class SentenceTransformerBackend(EncoderBackend):
    """labse / sbert via the sentence-transformers stack (local models)."""

    def __init__(self, name: str, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackendUnavailable(
                f"backend {name!r} needs the sentence-transformers package "
                f"(pip install 'docpool-adapter[encoders]')"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise BackendUnavailable(
                f"backend {name!r}: could not load model {model_id!r} locally: {exc}"
            ) from exc
        self.spec = SPECS[name]
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self._tokenizer = self._model.tokenizer

    def tokenize(self, text: str) -> list[int]:
        return self._tokenizer.encode(text, add_special_tokens=False)

    def detokenize(self, tokens: list[int]) -> str:
        return self._tokenizer.decode(tokens)

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            list(texts), convert_to_numpy=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float32)


class LaserBackend(EncoderBackend):
    """LASER via the laserembeddings package (BiLSTM, long inputs)."""

    def __init__(self, lang: str = "en"):
        try:
            from laserembeddings import Laser
        except ImportError as exc:
            raise BackendUnavailable(
                "backend 'laser' needs the laserembeddings package and its "
                "downloaded model files"
            ) from exc
        self._laser = Laser()
        self._lang = lang
        self.spec = SPECS["laser"]
        self.dim = 1024

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: list[str]) -> str:
        return " ".join(tokens)

    def encode(self, texts: list[str]) -> np.ndarray:
        return np.asarray(
            self._laser.embed_sentences(list(texts), lang=self._lang), dtype=np.float32
        )


def get_backend(name: str, model_path: str | None = None, dim: int = 32) -> EncoderBackend:
    if name == "hashed":
        return HashedBackend(dim=dim)
    if name == "labse":
        return SentenceTransformerBackend("labse", model_path or _LABSE_DEFAULT)
    if name == "sbert":
        return SentenceTransformerBackend("sbert", model_path or _SBERT_DEFAULT)
    if name == "laser":
        return LaserBackend()
    raise ValueError(f"unknown backend {name!r}; expected one of {sorted(SPECS)}")
