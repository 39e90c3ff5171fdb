"""Command-line front end: compose document vectors, train/evaluate the
attention pooler, align bilingual collections, and report corpus statistics.

Exit codes: 0 success, 1 validation error, 2 I/O or file-format error.
Every subcommand honors ``--seed``; the ``DOCPOOL_THREADS`` environment
variable caps worker threads in the per-document composition loop.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import align as align_mod
from . import learner, pert, weighting
from .corpus import (
    Document,
    ExcerptStrategy,
    collect_stats,
    load_manifest,
    select_excerpt,
    write_manifest,
)
from .embed_store import (
    EmbeddingMatrix,
    PcaModel,
    load_embeddings,
    pca_apply,
    pca_fit,
    store_embeddings,
)
from .errors import FormatError, ValidationError

EXCERPT_STRATEGIES = {s.value for s in ExcerptStrategy} | {"top-510", "bottom-510"}
POOLED_STRATEGIES = (
    "sentence-average",
    "top-half",
    "bottom-half",
    "tfidf",
    "tk-pert",
    "tf-pert",
)
TRAIN_STRATEGIES = ("att-pert", "att-tf-pert")


class _Parser(argparse.ArgumentParser):
    # Usage errors are validation errors under the exit-code contract.
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="docpool", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    compose = sub.add_parser("compose", help="compose one vector per document")
    compose.add_argument("--manifest", required=True)
    compose.add_argument("--embeddings", help="sentence embeddings (.semb container or directory)")
    compose.add_argument(
        "--strategy",
        required=True,
        choices=sorted(EXCERPT_STRATEGIES) + list(POOLED_STRATEGIES),
    )
    compose.add_argument("--tf-variant", choices=weighting.TF_VARIANTS, default="tf4")
    compose.add_argument("--pert-j", type=int, default=pert.DEFAULT_PARTS)
    compose.add_argument("--pert-gamma", type=float, default=pert.DEFAULT_GAMMA)
    compose.add_argument("--pert-resolution", type=int, default=pert.DEFAULT_RESOLUTION)
    compose.add_argument("--boilerplate", choices=("on", "off"), default="off")
    compose.add_argument("--pca-dim", type=int)
    compose.add_argument("--pca-model", help="fit-once/reuse path for the PCA model (.npz)")
    compose.add_argument("--excerpt-n", type=int, help="window size override for excerpts")
    compose.add_argument("--excerpt-m", type=int, help="tail size override for top-bottom")
    compose.add_argument("--dump-weights", help="debug JSON of per-sentence weights")
    compose.add_argument("--seed", type=int, default=0)
    compose.add_argument("--out", required=True)

    train = sub.add_parser("train", help="train the attention pooler + classifier")
    train.add_argument("--manifest", required=True)
    train.add_argument("--embeddings", required=True)
    train.add_argument("--strategy", choices=TRAIN_STRATEGIES, default="att-pert")
    train.add_argument("--task", choices=("auto",) + learner.TASKS, default="auto")
    train.add_argument("--pert-j", type=int, default=pert.DEFAULT_PARTS)
    train.add_argument("--pert-gamma", type=float, default=pert.DEFAULT_GAMMA)
    train.add_argument("--pert-resolution", type=int, default=pert.DEFAULT_RESOLUTION)
    train.add_argument("--pca-dim", type=int)
    train.add_argument("--pca-model")
    train.add_argument("--hidden", type=int, default=learner.DEFAULT_HIDDEN)
    train.add_argument("--epochs", type=int, default=50)
    train.add_argument("--learning-rate", type=float, default=1e-3)
    train.add_argument("--batch-size", type=int, default=32)
    train.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    train.add_argument("--patience", type=int, default=5)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True, help="model checkpoint path")

    align = sub.add_parser("align", help="align two composed collections")
    align.add_argument(
        "--embeddings",
        action="append",
        required=True,
        help="composed document vectors; pass twice (source, then target)",
    )
    align.add_argument(
        "--manifest",
        action="append",
        help="manifests supplying domain ids; pass twice like --embeddings",
    )
    align.add_argument("--gold", required=True, help="TSV of src_doc_id<TAB>tgt_doc_id")
    align.add_argument("--topk", type=int, default=align_mod.DEFAULT_TOP_K)
    align.add_argument("--bootstrap-samples", type=int, default=1000)
    align.add_argument("--seed", type=int, default=0)
    align.add_argument("--out", required=True, help="pairs TSV; metrics JSON lands at <out>.metrics.json")

    evaluate = sub.add_parser("eval", help="evaluate a trained model per language")
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--manifest", action="append", required=True)
    evaluate.add_argument("--embeddings", action="append", required=True)
    evaluate.add_argument("--pert-j", type=int, default=pert.DEFAULT_PARTS)
    evaluate.add_argument("--pert-gamma", type=float, default=pert.DEFAULT_GAMMA)
    evaluate.add_argument("--pert-resolution", type=int, default=pert.DEFAULT_RESOLUTION)
    evaluate.add_argument("--bootstrap-samples", type=int, default=1000)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--out", required=True, help="metrics JSON")

    stats = sub.add_parser("stats", help="document counts and tokenized lengths")
    stats.add_argument("--manifest", required=True)
    stats.add_argument("--out", help="optional JSON output")
    return parser


def _max_threads() -> int:
    raw = os.environ.get("DOCPOOL_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValidationError(f"DOCPOOL_THREADS must be an integer, got {raw!r}")
    if threads < 1:
        raise ValidationError("DOCPOOL_THREADS must be >= 1")
    return threads


def _load_matched_embeddings(
    docs: list[Document], path: str, check_counts: bool = True
) -> dict[str, EmbeddingMatrix]:
    embs = load_embeddings(path)
    missing = [doc.doc_id for doc in docs if doc.doc_id not in embs]
    if missing:
        for doc_id in missing:
            print(f"missing embeddings for document {doc_id!r}", file=sys.stderr)
        raise ValidationError(f"{len(missing)} document(s) without embeddings")
    if check_counts:
        bad = [
            (doc.doc_id, doc.n_sentences, embs[doc.doc_id].count)
            for doc in docs
            if embs[doc.doc_id].count != doc.n_sentences
        ]
        if bad:
            for doc_id, n_sent, n_rows in bad:
                print(
                    f"document {doc_id!r}: {n_sent} sentences but {n_rows} embedding rows",
                    file=sys.stderr,
                )
            raise ValidationError(f"{len(bad)} document(s) with row-count mismatches")
    return embs


def _maybe_pca(
    docs: list[Document],
    embs: dict[str, EmbeddingMatrix],
    pca_dim: int | None,
    pca_model_path: str | None,
) -> dict[str, EmbeddingMatrix]:
    """Optionally reduce sentence embeddings before composing.

    The model is fit on the train-split sentence pool (all documents when no
    split is marked train) and can be persisted with ``--pca-model`` so that
    both sides of a bilingual task share one projection.
    """
    if pca_dim is None:
        return embs
    if pca_model_path and Path(pca_model_path).exists():
        model = PcaModel.load(pca_model_path)
        if model.k != pca_dim:
            raise ValidationError(
                f"--pca-dim {pca_dim} does not match saved model k={model.k}"
            )
    else:
        fit_docs = [doc for doc in docs if doc.split == "train"] or docs
        pool = np.vstack([embs[doc.doc_id].values for doc in fit_docs])
        model = pca_fit(EmbeddingMatrix(pool), k=pca_dim)
        if pca_model_path:
            model.save(pca_model_path)
    return {doc_id: pca_apply(model, matrix) for doc_id, matrix in embs.items()}


def cmd_compose(args) -> int:
    docs = load_manifest(args.manifest)
    if args.strategy in EXCERPT_STRATEGIES:
        return _compose_excerpts(args, docs)

    if not args.embeddings:
        raise ValidationError(f"--embeddings is required for strategy {args.strategy!r}")
    embs = _load_matched_embeddings(docs, args.embeddings)
    embs = _maybe_pca(docs, embs, args.pca_dim, args.pca_model)

    stats = None
    if args.strategy in ("tfidf", "tf-pert"):
        stats = collect_stats(docs)
    bank = None
    boiler = None
    if args.strategy in ("tk-pert", "tf-pert"):
        bank = pert.build_window_bank(args.pert_j, args.pert_gamma, args.pert_resolution)
        boiler = pert.boilerplate_weights(docs, enabled=args.boilerplate == "on")

    weight_dump = {} if args.dump_weights else None

    def compose_one(doc: Document) -> np.ndarray:
        matrix = embs[doc.doc_id]
        if args.strategy == "sentence-average":
            w = weighting.make_weights(doc, "uniform")
        elif args.strategy in ("top-half", "bottom-half"):
            w = weighting.make_weights(doc, args.strategy)
        elif args.strategy == "tfidf":
            w = weighting.make_weights(doc, "tfidf", stats, args.tf_variant)
        elif args.strategy == "tk-pert":
            return pert.tk_pert(matrix, bank, boiler[doc.doc_id])
        else:  # tf-pert
            scores = weighting.tfidf_scores(doc, stats, args.tf_variant)
            return pert.tf_pert(matrix, bank, scores, boiler[doc.doc_id])
        if weight_dump is not None:
            weight_dump[doc.doc_id] = {"scheme": w.scheme_tag, "weights": w.weights.tolist()}
        return weighting.pool_weighted(matrix, w)

    threads = _max_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(compose_one, docs))
    else:
        vectors = [compose_one(doc) for doc in docs]

    composed = {
        doc.doc_id: EmbeddingMatrix(np.asarray(vec, dtype=np.float32)[None, :])
        for doc, vec in zip(docs, vectors)
    }
    out = args.out if args.out.endswith(".semb") else args.out + ".semb"
    store_embeddings(composed, out)
    if weight_dump is not None:
        Path(args.dump_weights).write_text(
            json.dumps(weight_dump, indent=2, sort_keys=True), encoding="utf-8"
        )
    print(f"composed {len(composed)} document vector(s) -> {out}")
    return 0


def _compose_excerpts(args, docs: list[Document]) -> int:
    strategy = {
        "top-510": ExcerptStrategy.TOP_N,
        "bottom-510": ExcerptStrategy.BOTTOM_N,
    }.get(args.strategy) or ExcerptStrategy(args.strategy)
    out = args.out
    if out.endswith(".semb"):
        out = out[: -len(".semb")] + ".ranges.jsonl"
    elif not out.endswith(".ranges.jsonl"):
        out = out + ".ranges.jsonl"
    with open(out, "w", encoding="utf-8") as fh:
        for doc in docs:
            spec = select_excerpt(doc, strategy, args.excerpt_n, args.excerpt_m)
            fh.write(
                json.dumps(
                    {
                        "doc_id": spec.doc_id,
                        "strategy": spec.strategy_tag.value,
                        "ranges": [list(r) for r in spec.ranges],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(
        f"excerpt strategy {args.strategy!r}: wrote token ranges for {len(docs)} "
        f"document(s) -> {out}; encode them with the adapter to obtain vectors"
    )
    return 0


def _dataset_from(docs, embs):
    return [(doc, embs[doc.doc_id], doc.labels) for doc in docs]


def cmd_train(args) -> int:
    docs = load_manifest(args.manifest)
    embs = _load_matched_embeddings(docs, args.embeddings)
    embs = _maybe_pca(docs, embs, args.pca_dim, args.pca_model)
    bank = pert.build_window_bank(args.pert_j, args.pert_gamma, args.pert_resolution)
    stats = collect_stats(docs) if args.strategy == "att-tf-pert" else None
    cfg = learner.TrainConfig(
        seed=args.seed,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        patience=args.patience,
    )
    task = None if args.task == "auto" else args.task
    model = learner.train(
        _dataset_from(docs, embs),
        cfg,
        mode=args.strategy,
        bank=bank,
        stats=stats,
        hidden=args.hidden,
        task=task,
    )
    learner.save_checkpoint(model, args.out)
    metrics = {
        "mode": model.mode,
        "task": model.task,
        "labels": model.labels,
        "epochs_run": len(model.history),
        "best_dev_metric": max(h["dev_metric"] for h in model.history),
        "history": model.history,
    }
    metrics_path = args.out + ".metrics.json"
    Path(metrics_path).write_text(
        json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8"
    )
    print(
        f"trained {model.mode} ({model.task}, {len(model.labels)} labels) "
        f"best dev metric {metrics['best_dev_metric']:.4f} -> {args.out}"
    )
    return 0


def _load_document_vectors(path: str) -> dict[str, np.ndarray]:
    embs = load_embeddings(path)
    bad = [doc_id for doc_id, m in embs.items() if m.count != 1]
    if bad:
        raise ValidationError(
            f"{path}: expected composed document vectors (one row per document), "
            f"but {len(bad)} entries have multiple rows (e.g. {bad[0]!r}); "
            f"run 'docpool compose' first"
        )
    return {doc_id: m.values[0] for doc_id, m in embs.items()}


def _read_gold(path: str) -> set[tuple[str, str]]:
    gold = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise FormatError(f"{path}:{lineno}: expected src<TAB>tgt")
            gold.add((parts[0], parts[1]))
    if not gold:
        raise ValidationError(f"{path}: gold file has no pairs")
    return gold


def cmd_align(args) -> int:
    if len(args.embeddings) != 2:
        raise ValidationError("align needs exactly two --embeddings (source, target)")
    src_vecs = _load_document_vectors(args.embeddings[0])
    tgt_vecs = _load_document_vectors(args.embeddings[1])
    domains = None
    if args.manifest:
        if len(args.manifest) != 2:
            raise ValidationError("pass --manifest twice (source, target) or not at all")
        domains = {}
        for path in args.manifest:
            for doc in load_manifest(path):
                domains[doc.doc_id] = doc.domain_id
    gold = _read_gold(args.gold)

    index = align_mod.build_index(tgt_vecs)
    candidates = {
        src_id: align_mod.topk(index, vec, args.topk) for src_id, vec in src_vecs.items()
    }
    result = align_mod.match(candidates, domains)
    predicted = result.predicted_pairs()
    ci = align_mod.bootstrap_ci(
        lambda sample: sum(pair in predicted for pair in sample) / len(sample),
        sorted(gold),
        n_samples=args.bootstrap_samples,
        seed=args.seed,
    )

    with open(args.out, "w", encoding="utf-8") as fh:
        for src, tgt, score in result.pairs:
            fh.write(f"{src}\t{tgt}\t{score:.6f}\n")
    metrics = {
        "recall": ci.point,
        "ci_low": ci.low,
        "ci_high": ci.high,
        "n_gold": len(gold),
        "n_pairs": len(result.pairs),
        "formatted": ci.formatted(),
    }
    Path(args.out + ".metrics.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8"
    )
    print(f"recall {ci.formatted()} over {len(gold)} gold pairs -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    if len(args.manifest) != len(args.embeddings):
        raise ValidationError("--manifest and --embeddings must be passed in matching pairs")
    model = learner.load_checkpoint(args.model)
    bank = pert.build_window_bank(args.pert_j, args.pert_gamma, args.pert_resolution)

    results = {}
    for manifest_path, embeddings_path in zip(args.manifest, args.embeddings):
        docs = load_manifest(manifest_path)
        embs = _load_matched_embeddings(docs, embeddings_path)
        by_lang: dict[str, list[Document]] = {}
        for doc in docs:
            by_lang.setdefault(doc.lang, []).append(doc)
        for lang, lang_docs in by_lang.items():
            stats = collect_stats(lang_docs) if model.mode == "att-tf-pert" else None
            golds, preds = [], []
            for doc in lang_docs:
                tfidf = (
                    weighting.tfidf_scores(doc, stats) if stats is not None else None
                )
                preds.append(learner.predict(model, embs[doc.doc_id], bank, tfidf))
                golds.append(doc.labels)
            if model.task == "multiclass":
                items = [int(g[0] == p[0]) for g, p in zip(golds, preds)]
                ci = align_mod.bootstrap_ci(
                    lambda sample: sum(sample) / len(sample),
                    items,
                    n_samples=args.bootstrap_samples,
                    seed=args.seed,
                )
                metric_name = "accuracy"
            else:
                items = list(zip(golds, preds))
                ci = align_mod.bootstrap_ci(
                    lambda sample: learner.micro_f1(
                        [g for g, _ in sample], [p for _, p in sample]
                    ),
                    items,
                    n_samples=args.bootstrap_samples,
                    seed=args.seed,
                )
                metric_name = "micro_f1"
            results[lang] = {
                "metric": metric_name,
                "value": ci.point,
                "ci_low": ci.low,
                "ci_high": ci.high,
                "n_docs": len(lang_docs),
                "formatted": ci.formatted(),
            }
            print(f"{lang}: {metric_name} {ci.formatted()} over {len(lang_docs)} docs")

    Path(args.out).write_text(
        json.dumps(results, indent=2, sort_keys=True), encoding="utf-8"
    )
    return 0


def cmd_stats(args) -> int:
    docs = load_manifest(args.manifest)
    report: dict[str, dict] = {}
    by_lang: dict[str, list[Document]] = {}
    for doc in docs:
        by_lang.setdefault(doc.lang, []).append(doc)
    for lang in sorted(by_lang):
        lang_docs = by_lang[lang]
        stats = collect_stats(lang_docs)
        counts = {split: sum(d.split == split for d in lang_docs) for split in ("train", "dev", "test")}
        report[lang] = {
            "n_docs": stats.n_docs,
            **{f"n_{split}": n for split, n in counts.items()},
            "avg_len": stats.avg_len,
            "max_len": stats.max_len,
        }
    header = f"{'lang':<8}{'docs':>7}{'train':>7}{'dev':>7}{'test':>7}{'avg len':>10}{'max len':>10}"
    print(header)
    for lang, row in report.items():
        print(
            f"{lang:<8}{row['n_docs']:>7}{row['n_train']:>7}{row['n_dev']:>7}"
            f"{row['n_test']:>7}{row['avg_len']:>10.1f}{row['max_len']:>10}"
        )
    if args.out:
        Path(args.out).write_text(
            json.dumps(report, indent=2, sort_keys=True), encoding="utf-8"
        )
    return 0


_COMMANDS = {
    "compose": cmd_compose,
    "train": cmd_train,
    "align": cmd_align,
    "eval": cmd_eval,
    "stats": cmd_stats,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return _COMMANDS[args.command](args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
