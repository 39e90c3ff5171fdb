import json

import pytest


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@pytest.fixture
def manifest(tmp_path):
    records = [
        {
            "doc_id": "doc-a",
            "lang": "en",
            "domain_id": None,
            "split": "test",
            "labels": [],
            "sentences": [
                {"text": "the quick brown fox", "subword_count": 0},
                {"text": "jumps over the lazy dog", "subword_count": 0},
            ],
        },
        {
            "doc_id": "doc-b",
            "lang": "fr",
            "domain_id": "site",
            "split": "test",
            "labels": ["x"],
            "sentences": [{"text": "une seule phrase ici", "subword_count": 0}],
        },
    ]
    path = tmp_path / "manifest.jsonl"
    write_jsonl(path, records)
    return path
