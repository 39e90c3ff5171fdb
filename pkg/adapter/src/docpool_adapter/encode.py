"""Encode document manifests and token-range excerpts into SEMB files.

Manifests are JSONL, one document per line, with ``doc_id`` and a
``sentences`` list of ``{"text", "subword_count"}`` records. Encoding a
manifest writes one ``<doc_id>.semb`` per document (one row per sentence)
and fills the measured subword counts back into the manifest so that
excerpt arithmetic downstream uses this backend's tokenizer.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .backends import SPECS, EncoderBackend
from .semb import write_container, write_matrix


class EncodeError(Exception):
    pass


def read_manifest_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EncodeError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "doc_id" not in record or "sentences" not in record:
                raise EncodeError(f"{path}:{lineno}: record needs doc_id and sentences")
            records.append(record)
    return records


def write_manifest_records(records: list[dict], path: str | Path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def encode_manifest(
    manifest_path: str | Path,
    backend: EncoderBackend,
    out_dir: str | Path,
    update_manifest: bool = True,
) -> list[dict]:
    """One SEMB file per document, one row per sentence, in sentence order.

    Sentences longer than the backend's token budget are truncated for
    encoding; each truncation is reported in the returned warning records
    (and in ``warnings.jsonl`` next to the output). The manifest gets the
    measured subword counts written back in place.
    """
    records = read_manifest_records(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    max_tokens = backend.spec.max_tokens

    warnings: list[dict] = []
    for record in records:
        texts = []
        for i, sentence in enumerate(record["sentences"]):
            text = sentence["text"]
            count = backend.count_tokens(text)
            sentence["subword_count"] = count
            if count > max_tokens:
                warnings.append(
                    {
                        "doc_id": record["doc_id"],
                        "sentence_index": i,
                        "subword_count": count,
                        "max_tokens": max_tokens,
                    }
                )
                text = backend.truncate(text, max_tokens)
            texts.append(text)
        vectors = backend.encode(texts)
        if vectors.shape != (len(texts), backend.dim):
            raise EncodeError(
                f"backend returned shape {vectors.shape}, "
                f"expected ({len(texts)}, {backend.dim})"
            )
        write_matrix(out_dir / f"{record['doc_id']}.semb", vectors)

    if warnings:
        with open(out_dir / "warnings.jsonl", "w", encoding="utf-8") as fh:
            for w in warnings:
                fh.write(json.dumps(w) + "\n")
    if update_manifest and records:
        write_manifest_records(records, manifest_path)
    return warnings


def read_ranges(path: str | Path) -> list[dict]:
    specs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            for key in ("doc_id", "strategy", "ranges"):
                if key not in record:
                    raise EncodeError(f"{path}:{lineno}: range record needs {key!r}")
            specs.append(record)
    return specs


def encode_ranges(
    ranges_path: str | Path,
    manifest_path: str | Path,
    backend_name: str,
    out_path: str | Path,
    backend: EncoderBackend | None = None,
    backend_factory=None,
) -> int:
    """One vector per document from its selected token ranges.

    The token stream is the concatenation of per-sentence subword token
    lists (matching how the ranges were computed from per-sentence counts);
    the selected slices are decoded back to text and encoded as one input.
    ``all-tokens`` ranges are refused for backends that cannot take a full
    document, before any model is loaded.
    """
    if backend_name not in SPECS:
        raise EncodeError(f"unknown backend {backend_name!r}; expected one of {sorted(SPECS)}")
    spec = SPECS[backend_name]
    range_specs = read_ranges(ranges_path)

    # Validation happens up front: refusing all-tokens must not require the model.
    if any(r["strategy"] == "all-tokens" for r in range_specs) and not spec.allows_full_document:
        raise EncodeError(
            f"all-tokens excerpts are not supported with backend {backend_name!r}; "
            f"full-document encoding needs an unrestricted-input backend"
        )

    records = {r["doc_id"]: r for r in read_manifest_records(manifest_path)}
    missing = [r["doc_id"] for r in range_specs if r["doc_id"] not in records]
    if missing:
        raise EncodeError(f"{len(missing)} range document(s) missing from manifest: {missing[:5]}")

    if backend is None:
        from .backends import get_backend

        factory = backend_factory or get_backend
        backend = factory(backend_name)

    matrices: dict[str, np.ndarray] = {}
    for range_spec in range_specs:
        record = records[range_spec["doc_id"]]
        stream: list = []
        for sentence in record["sentences"]:
            stream.extend(backend.tokenize(sentence["text"]))
        total = len(stream)
        if range_spec["strategy"] == "all-tokens" and total > spec.max_tokens:
            raise EncodeError(
                f"document {range_spec['doc_id']!r} has {total} tokens, more than "
                f"backend {backend_name!r} accepts ({spec.max_tokens})"
            )
        selected: list = []
        for start, end in range_spec["ranges"]:
            if start < 0 or end < start:
                raise EncodeError(f"document {range_spec['doc_id']!r}: bad range ({start}, {end})")
            selected.extend(stream[start:min(end, total)])
        text = backend.detokenize(selected[: spec.max_tokens] if range_spec["strategy"] != "all-tokens" else selected)
        matrices[range_spec["doc_id"]] = backend.encode([text])

    write_container(out_path, matrices)
    return len(matrices)
