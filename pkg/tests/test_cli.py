import json

import numpy as np
import pytest

from docpool.cli import main
from docpool.corpus import write_manifest
from docpool.embed_store import EmbeddingMatrix, load_embeddings, store_embeddings

from conftest import make_doc


@pytest.fixture
def small_corpus(tmp_path, rng):
    """Three documents with sentence embeddings in a container file."""
    docs = [
        make_doc("doc-a", texts=["alpha one two", "beta three"], subwords=[30, 20], split="train"),
        make_doc("doc-b", texts=["gamma four", "delta five six", "epsilon"], subwords=[10, 25, 5], split="train"),
        make_doc("doc-c", texts=["zeta seven"], subwords=[40], split="test"),
    ]
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(docs, manifest)
    embs = {
        doc.doc_id: EmbeddingMatrix(rng.normal(size=(doc.n_sentences, 6)).astype(np.float32))
        for doc in docs
    }
    semb = tmp_path / "sentences.semb"
    store_embeddings(embs, semb)
    return docs, manifest, semb


class TestCompose:
    def test_sentence_average(self, tmp_path, small_corpus):
        docs, manifest, semb = small_corpus
        out = tmp_path / "avg.semb"
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "sentence-average", "--out", str(out),
        ])
        assert code == 0
        loaded = load_embeddings(out)
        assert set(loaded) == {"doc-a", "doc-b", "doc-c"}
        assert all(m.values.shape == (1, 6) for m in loaded.values())

    def test_tk_pert_dim_is_j_times_d(self, tmp_path, small_corpus):
        _, manifest, semb = small_corpus
        out = tmp_path / "tkpert.semb"
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "tk-pert", "--pert-j", "16", "--out", str(out),
        ])
        assert code == 0
        loaded = load_embeddings(out)
        assert all(m.values.shape == (1, 96) for m in loaded.values())

    def test_excerpt_strategy_writes_ranges_no_semb(self, tmp_path, small_corpus):
        _, manifest, _ = small_corpus
        out = tmp_path / "top.semb"
        code = main([
            "compose", "--manifest", str(manifest),
            "--strategy", "top-510", "--out", str(out),
        ])
        assert code == 0
        assert not out.exists()
        ranges_path = tmp_path / "top.ranges.jsonl"
        records = [json.loads(line) for line in ranges_path.read_text().splitlines()]
        assert {r["doc_id"] for r in records} == {"doc-a", "doc-b", "doc-c"}
        by_id = {r["doc_id"]: r for r in records}
        assert by_id["doc-a"]["ranges"] == [[0, 50]]

    def test_missing_embeddings_lists_docs_and_exits_1(self, tmp_path, small_corpus, capsys):
        docs, manifest, _ = small_corpus
        partial = tmp_path / "partial.semb"
        rng = np.random.default_rng(0)
        store_embeddings(
            {"doc-a": EmbeddingMatrix(rng.normal(size=(2, 6)).astype(np.float32))}, partial
        )
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(partial),
            "--strategy", "sentence-average", "--out", str(tmp_path / "x.semb"),
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert "doc-b" in err and "doc-c" in err

    def test_tfidf_with_variant_and_dump(self, tmp_path, small_corpus):
        _, manifest, semb = small_corpus
        out = tmp_path / "tfidf.semb"
        dump = tmp_path / "weights.json"
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "tfidf", "--tf-variant", "tf2",
            "--dump-weights", str(dump), "--out", str(out),
        ])
        assert code == 0
        weights = json.loads(dump.read_text())
        assert set(weights) == {"doc-a", "doc-b", "doc-c"}
        for record in weights.values():
            assert sum(record["weights"]) == pytest.approx(1.0)

    def test_pca_path(self, tmp_path, rng):
        docs = [
            make_doc(f"d{i}", texts=["s"] * 10, subwords=[3] * 10, split="train")
            for i in range(8)
        ]
        manifest = tmp_path / "manifest.jsonl"
        write_manifest(docs, manifest)
        embs = {
            d.doc_id: EmbeddingMatrix(rng.normal(size=(10, 32)).astype(np.float32))
            for d in docs
        }
        semb = tmp_path / "sent.semb"
        store_embeddings(embs, semb)
        out = tmp_path / "avg.semb"
        pca_model = tmp_path / "pca.npz"
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "sentence-average", "--pca-dim", "8",
            "--pca-model", str(pca_model), "--out", str(out),
        ])
        assert code == 0
        assert pca_model.exists()
        loaded = load_embeddings(out)
        assert all(m.values.shape == (1, 8) for m in loaded.values())

    def test_bad_strategy_exits_1(self, tmp_path, small_corpus):
        _, manifest, semb = small_corpus
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "nope", "--out", str(tmp_path / "x.semb"),
        ])
        assert code == 1

    def test_missing_manifest_exits_2(self, tmp_path):
        code = main([
            "compose", "--manifest", str(tmp_path / "absent.jsonl"),
            "--strategy", "top-510", "--out", str(tmp_path / "x.semb"),
        ])
        assert code == 2


class TestStats:
    def test_report(self, tmp_path, capsys):
        docs = [
            make_doc("a", texts=["x"], subwords=[100], split="train"),
            make_doc("b", texts=["y"], subwords=[300], split="test"),
        ]
        manifest = tmp_path / "m.jsonl"
        write_manifest(docs, manifest)
        out = tmp_path / "stats.json"
        assert main(["stats", "--manifest", str(manifest), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["en"]["avg_len"] == 200
        assert report["en"]["max_len"] == 300
        assert report["en"]["n_train"] == 1


def _bilingual_fixture(tmp_path, rng, n=20, dim=8):
    latents = rng.normal(size=(n, dim)).astype(np.float32)
    src = {f"en{i:02d}": EmbeddingMatrix(latents[i][None, :]) for i in range(n)}
    tgt = {f"fr{i:02d}": EmbeddingMatrix(latents[i][None, :]) for i in range(n)}
    src_path = tmp_path / "src.semb"
    tgt_path = tmp_path / "tgt.semb"
    store_embeddings(src, src_path)
    store_embeddings(tgt, tgt_path)
    gold = tmp_path / "gold.tsv"
    gold.write_text("".join(f"en{i:02d}\tfr{i:02d}\n" for i in range(n)))
    return src_path, tgt_path, gold


class TestAlign:
    def test_identical_collections_full_recall(self, tmp_path, rng):
        src_path, tgt_path, gold = _bilingual_fixture(tmp_path, rng)
        out = tmp_path / "pairs.tsv"
        code = main([
            "align", "--embeddings", str(src_path), "--embeddings", str(tgt_path),
            "--gold", str(gold), "--topk", "5",
            "--bootstrap-samples", "200", "--seed", "0", "--out", str(out),
        ])
        assert code == 0
        metrics = json.loads((tmp_path / "pairs.tsv.metrics.json").read_text())
        assert metrics["recall"] == 1.0
        assert metrics["ci_low"] == 1.0 and metrics["ci_high"] == 1.0
        assert metrics["n_gold"] == 20
        lines = out.read_text().splitlines()
        assert len(lines) == 20

    def test_missing_gold_exits_2(self, tmp_path, rng):
        src_path, tgt_path, _ = _bilingual_fixture(tmp_path, rng)
        code = main([
            "align", "--embeddings", str(src_path), "--embeddings", str(tgt_path),
            "--gold", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "pairs.tsv"),
        ])
        assert code == 2

    def test_sentence_matrices_rejected(self, tmp_path, rng, capsys):
        multi = {
            "en00": EmbeddingMatrix(rng.normal(size=(3, 8)).astype(np.float32)),
        }
        multi_path = tmp_path / "multi.semb"
        store_embeddings(multi, multi_path)
        _, tgt_path, gold = _bilingual_fixture(tmp_path, rng)
        code = main([
            "align", "--embeddings", str(multi_path), "--embeddings", str(tgt_path),
            "--gold", str(gold), "--out", str(tmp_path / "pairs.tsv"),
        ])
        assert code == 1
        assert "compose" in capsys.readouterr().err

    def test_single_embeddings_flag_exits_1(self, tmp_path, rng):
        src_path, _, gold = _bilingual_fixture(tmp_path, rng)
        code = main([
            "align", "--embeddings", str(src_path),
            "--gold", str(gold), "--out", str(tmp_path / "pairs.tsv"),
        ])
        assert code == 1


def _classification_fixture(tmp_path, rng, n_train=40, n_dev=16, dim=8):
    centers = {"pos": 3.0 * np.eye(dim)[0], "neg": 3.0 * np.eye(dim)[1]}
    docs, embs = [], {}
    for i in range(n_train + n_dev):
        label = "pos" if i % 2 == 0 else "neg"
        split = "train" if i < n_train else "dev"
        n_sent = int(rng.integers(2, 6))
        doc = make_doc(
            f"doc{i:03d}",
            texts=[f"text {j}" for j in range(n_sent)],
            subwords=[4] * n_sent,
            labels=[label],
            split=split,
        )
        docs.append(doc)
        values = centers[label][None, :] + 0.05 * rng.normal(size=(n_sent, dim))
        embs[doc.doc_id] = EmbeddingMatrix(values.astype(np.float32))
    manifest = tmp_path / "cls.jsonl"
    write_manifest(docs, manifest)
    semb = tmp_path / "cls.semb"
    store_embeddings(embs, semb)
    return manifest, semb


class TestTrainEval:
    def test_train_is_byte_reproducible(self, tmp_path, rng):
        manifest, semb = _classification_fixture(tmp_path, rng)
        args = [
            "train", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "att-pert", "--pert-j", "4", "--epochs", "4",
            "--learning-rate", "0.01", "--seed", "11",
        ]
        a, b = tmp_path / "a.dpml", tmp_path / "b.dpml"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        metrics = json.loads((tmp_path / "a.dpml.metrics.json").read_text())
        assert metrics["epochs_run"] == 4
        assert len(metrics["history"]) == 4

    def test_train_then_eval_separable(self, tmp_path, rng):
        manifest, semb = _classification_fixture(tmp_path, rng)
        model = tmp_path / "model.dpml"
        code = main([
            "train", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "att-pert", "--pert-j", "4", "--epochs", "25",
            "--learning-rate", "0.01", "--seed", "0", "--out", str(model),
        ])
        assert code == 0
        metrics = json.loads((tmp_path / "model.dpml.metrics.json").read_text())
        assert metrics["best_dev_metric"] >= 0.95

        out = tmp_path / "eval.json"
        code = main([
            "eval", "--model", str(model), "--manifest", str(manifest),
            "--embeddings", str(semb), "--pert-j", "4",
            "--bootstrap-samples", "200", "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["en"]["metric"] == "accuracy"
        assert report["en"]["value"] >= 0.9
        assert "formatted" in report["en"]

    def test_bad_label_in_dev_names_doc(self, tmp_path, rng, capsys):
        manifest, semb = _classification_fixture(tmp_path, rng, n_train=10, n_dev=4)
        docs = [json.loads(line) for line in manifest.read_text().splitlines()]
        docs[-1]["labels"] = ["mystery"]
        manifest.write_text("".join(json.dumps(d) + "\n" for d in docs))
        code = main([
            "train", "--manifest", str(manifest), "--embeddings", str(semb),
            "--epochs", "2", "--out", str(tmp_path / "m.dpml"),
        ])
        assert code == 1
        assert docs[-1]["doc_id"] in capsys.readouterr().err


class TestThreadCap:
    def test_compose_honors_thread_env(self, tmp_path, small_corpus, monkeypatch):
        _, manifest, semb = small_corpus
        monkeypatch.setenv("DOCPOOL_THREADS", "4")
        serial = tmp_path / "serial.semb"
        monkeypatch.setenv("DOCPOOL_THREADS", "1")
        assert main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "sentence-average", "--out", str(serial),
        ]) == 0
        monkeypatch.setenv("DOCPOOL_THREADS", "4")
        threaded = tmp_path / "threaded.semb"
        assert main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "sentence-average", "--out", str(threaded),
        ]) == 0
        assert serial.read_bytes() == threaded.read_bytes()

    def test_bad_thread_env_exits_1(self, tmp_path, small_corpus, monkeypatch):
        _, manifest, semb = small_corpus
        monkeypatch.setenv("DOCPOOL_THREADS", "zero")
        code = main([
            "compose", "--manifest", str(manifest), "--embeddings", str(semb),
            "--strategy", "sentence-average", "--out", str(tmp_path / "x.semb"),
        ])
        assert code == 1
