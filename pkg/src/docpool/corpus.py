"""Document data model, word tokenization, excerpt selection and corpus statistics.

Documents arrive pre-segmented into sentences (manifest JSONL, one document
per line). Word tokens feed the TF-IDF weighting; subword counts come from
whatever encoder produced the sentence embeddings and are used only for
length statistics and excerpt arithmetic.
"""
from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import FormatError, ValidationError

VALID_SPLITS = ("train", "dev", "test")

# Scripts without whitespace word boundaries: emit one token per codepoint.
# Covers hiragana/katakana, CJK unified ideographs (+ ext A, compatibility)
# and halfwidth katakana. Documented limitation, not a linguistic segmenter.
_NO_SPACE_RANGES = (
    (0x3040, 0x30FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0xFF66, 0xFF9D),
)


def _is_no_space_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _NO_SPACE_RANGES)


def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize_words(text: str) -> list[str]:
    """Deterministic word tokenizer used for TF-IDF weighting.

    NFC-normalizes, lowercases, splits on Unicode whitespace and strips
    leading/trailing punctuation from each token; empty tokens are dropped.
    Internal punctuation (apostrophes, hyphens) is kept. Codepoints from
    scripts without whitespace word boundaries (Japanese kana, CJK
    ideographs) become single-character tokens.
    """
    if not text:
        return []
    text = unicodedata.normalize("NFC", text).lower()
    tokens: list[str] = []
    for chunk in text.split():
        run: list[str] = []
        pieces: list[str] = []
        for ch in chunk:
            if _is_no_space_char(ch):
                if run:
                    pieces.append("".join(run))
                    run = []
                pieces.append(ch)
            else:
                run.append(ch)
        if run:
            pieces.append("".join(run))
        for piece in pieces:
            piece = _strip_edge_punct(piece)
            if piece:
                tokens.append(piece)
    return tokens


@dataclass
class Sentence:
    """One sentence of a document.

    ``words`` is derived from ``text`` with :func:`tokenize_words` when not
    given explicitly. ``subword_count`` is the sentence's length under the
    encoder's subword tokenizer; 0 means the encoder has not run yet.
    """

    text: str
    words: list[str] | None = None
    subword_count: int = 0

    def __post_init__(self):
        if self.words is None:
            self.words = tokenize_words(self.text)
        if self.subword_count < 0:
            raise ValidationError("subword_count must be >= 0")


@dataclass
class Document:
    doc_id: str
    lang: str
    sentences: list[Sentence]
    labels: list[str] = field(default_factory=list)
    domain_id: str | None = None
    split: str = "test"

    def __post_init__(self):
        if not self.sentences:
            raise ValidationError(f"document {self.doc_id!r} has no sentences")
        if self.split not in VALID_SPLITS:
            raise ValidationError(
                f"document {self.doc_id!r} has invalid split {self.split!r}; "
                f"expected one of {VALID_SPLITS}"
            )

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    def subword_total(self) -> int:
        return sum(s.subword_count for s in self.sentences)

    def word_counts(self) -> Counter:
        """Term frequencies over all word tokens of the document."""
        counts: Counter = Counter()
        for sentence in self.sentences:
            counts.update(sentence.words)
        return counts


class ExcerptStrategy(str, Enum):
    ALL_TOKENS = "all-tokens"
    TOP_N = "top-n"
    BOTTOM_N = "bottom-n"
    TOP_BOTTOM = "top-bottom"


# Encoder payload cap for transformer-style backends (512 minus the two
# special positions), and the first/last sizes for the combined excerpt.
MAX_EXCERPT_TOKENS = 510
DEFAULT_TOP_TOKENS = 128
DEFAULT_BOTTOM_TOKENS = 382


@dataclass
class TokenRangeSpec:
    """Half-open token ranges over a document's concatenated subword stream."""

    doc_id: str
    ranges: list[tuple[int, int]]
    strategy_tag: ExcerptStrategy

    def __post_init__(self):
        prev_end = None
        for start, end in self.ranges:
            if start < 0 or end <= start:
                raise ValidationError(
                    f"bad token range ({start}, {end}) for document {self.doc_id!r}"
                )
            if prev_end is not None and start < prev_end:
                raise ValidationError(
                    f"overlapping/unsorted token ranges for document {self.doc_id!r}"
                )
            prev_end = end

    def n_tokens(self) -> int:
        return sum(end - start for start, end in self.ranges)


def select_excerpt(
    doc: Document,
    strategy: ExcerptStrategy | str,
    n: int | None = None,
    m: int | None = None,
) -> TokenRangeSpec:
    """Select the token window(s) to feed an encoder directly.

    ``n`` is the window size for top-n/bottom-n (default 510) and the head
    size for top-bottom (default 128); ``m`` is the tail size for top-bottom
    (default 382). Adjacent or overlapping head/tail ranges are merged.
    """
    strategy = ExcerptStrategy(strategy)
    total = doc.subword_total()
    if total == 0:
        raise ValidationError(f"unencoded document: {doc.doc_id!r} has no subword counts")

    if strategy is ExcerptStrategy.ALL_TOKENS:
        ranges = [(0, total)]
    elif strategy is ExcerptStrategy.TOP_N:
        n = MAX_EXCERPT_TOKENS if n is None else n
        _check_budget(n)
        ranges = [(0, min(n, total))]
    elif strategy is ExcerptStrategy.BOTTOM_N:
        n = MAX_EXCERPT_TOKENS if n is None else n
        _check_budget(n)
        ranges = [(max(0, total - n), total)]
    else:
        n = DEFAULT_TOP_TOKENS if n is None else n
        m = DEFAULT_BOTTOM_TOKENS if m is None else m
        _check_budget(n + m)
        head = (0, min(n, total))
        tail = (max(head[1], total - m), total)
        if tail[0] <= head[1]:
            ranges = [(head[0], tail[1])]
        else:
            ranges = [head, tail]
        ranges = [(s, e) for s, e in ranges if e > s]
    return TokenRangeSpec(doc.doc_id, ranges, strategy)


def _check_budget(requested: int):
    if requested < 1:
        raise ValidationError("excerpt size must be >= 1")
    if requested > MAX_EXCERPT_TOKENS:
        raise ValidationError(
            f"excerpt selects {requested} tokens, more than the "
            f"{MAX_EXCERPT_TOKENS}-token encoder payload cap"
        )


def split_halves(doc: Document) -> tuple[set[int], set[int]]:
    """Partition sentence indices into top and bottom halves.

    The middle sentence of an odd-length document goes to the top half.
    """
    n = doc.n_sentences
    cut = math.ceil(n / 2)
    return set(range(cut)), set(range(cut, n))


@dataclass
class CollectionStats:
    """Collection-level statistics backing TF-IDF and length reporting.

    ``doc_freq`` counts each word once per document containing it;
    ``sentence_doc_freq`` does the same for exact sentence texts (used by
    boilerplate down-weighting). Lengths are subword-count totals.
    """

    n_docs: int
    doc_freq: dict[str, int]
    sentence_doc_freq: dict[str, int]
    avg_len: float
    max_len: int


def collect_stats(collection: list[Document]) -> CollectionStats:
    if not collection:
        raise ValidationError("cannot collect statistics over an empty collection")
    doc_freq: Counter = Counter()
    sentence_doc_freq: Counter = Counter()
    totals = []
    for doc in collection:
        words = set()
        texts = set()
        for sentence in doc.sentences:
            words.update(sentence.words)
            texts.add(sentence.text)
        doc_freq.update(words)
        sentence_doc_freq.update(texts)
        totals.append(doc.subword_total())
    return CollectionStats(
        n_docs=len(collection),
        doc_freq=dict(doc_freq),
        sentence_doc_freq=dict(sentence_doc_freq),
        avg_len=sum(totals) / len(totals),
        max_len=max(totals),
    )


def load_manifest(path: str | Path) -> list[Document]:
    """Read a JSONL manifest, one document per line.

    Schema per line: ``{"doc_id", "lang", "sentences": [{"text",
    "subword_count"}], "labels", "domain_id", "split"}``. ``labels``
    defaults to empty, ``domain_id`` to null and ``split`` to "test".
    """
    path = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                doc = _document_from_record(record)
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
            if doc.doc_id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def _document_from_record(record: dict) -> Document:
    sentences = [
        Sentence(text=s["text"], subword_count=int(s.get("subword_count", 0)))
        for s in record["sentences"]
    ]
    return Document(
        doc_id=record["doc_id"],
        lang=record["lang"],
        sentences=sentences,
        labels=list(record.get("labels") or []),
        domain_id=record.get("domain_id"),
        split=record.get("split", "test"),
    )


def write_manifest(docs: Iterable[Document], path: str | Path):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "doc_id": doc.doc_id,
                "lang": doc.lang,
                "domain_id": doc.domain_id,
                "split": doc.split,
                "labels": doc.labels,
                "sentences": [
                    {"text": s.text, "subword_count": s.subword_count}
                    for s in doc.sentences
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def group_by_domain(docs: Iterable[Document]) -> dict[str | None, list[Document]]:
    """Group documents by ``domain_id``; documents without one share a group."""
    groups: dict[str | None, list[Document]] = defaultdict(list)
    for doc in docs:
        groups[doc.domain_id].append(doc)
    return dict(groups)
