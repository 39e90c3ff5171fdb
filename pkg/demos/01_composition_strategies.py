"""
Composing document vectors from sentence embeddings
====================================================

A walk through every pooling strategy on one synthetic document: plain
averaging, half-document averaging, TF-IDF weighting, and the positional
windowing compositions.
"""
import numpy as np

from docpool import (
    EmbeddingMatrix,
    Document,
    Sentence,
    build_window_bank,
    collect_stats,
    make_weights,
    pool_weighted,
    tf_pert,
    tfidf_scores,
    tk_pert,
)

rng = np.random.default_rng(0)

# A small "collection": three documents, ten sentences each. Document words
# drive the TF-IDF weights; the embeddings are random stand-ins for what a
# multilingual sentence encoder would produce.
vocab = ["market", "trade", "price", "growth", "policy", "rates", "the", "a", "of"]
docs = []
for d in range(3):
    sentences = [
        Sentence(" ".join(rng.choice(vocab, size=6)), subword_count=12)
        for _ in range(10)
    ]
    docs.append(Document(doc_id=f"doc{d}", lang="en", sentences=sentences))

stats = collect_stats(docs)
doc = docs[0]
embs = EmbeddingMatrix(rng.normal(size=(10, 16)).astype(np.float32))

# --- weighted averages -------------------------------------------------------
for scheme in ("uniform", "top-half", "bottom-half", "tfidf"):
    w = make_weights(doc, scheme, stats)
    vec = pool_weighted(embs, w)
    print(f"{scheme:>12}: weights {np.round(w.weights, 3)} -> ||vec|| = {np.linalg.norm(vec):.3f}")

# --- positional windowing ----------------------------------------------------
# 4 overlapping windows; each window's weighted sum is normalized and the
# pieces are concatenated, so the vector length becomes J * d.
bank = build_window_bank(parts=4, gamma=20.0)
positional = tk_pert(embs, bank)
semantic = tf_pert(embs, bank, tfidf_scores(doc, stats))
print(f"\nwindowed vector dim: {positional.size} (J=4 windows x d=16)")
print(f"tk-pert norm {np.linalg.norm(positional):.3f}, tf-pert norm {np.linalg.norm(semantic):.3f}")

# Reversing the sentence order moves mass between windows: the windowed
# composition notices, the plain average cannot.
reversed_embs = EmbeddingMatrix(embs.values[::-1].copy())
avg = pool_weighted(embs, make_weights(doc, "uniform"))
avg_rev = pool_weighted(reversed_embs, make_weights(doc, "uniform"))
win_rev = tk_pert(reversed_embs, bank)
cos = lambda a, b: float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
print(f"\ncosine(average, reversed average)  = {cos(avg, avg_rev):.6f}")
print(f"cosine(tk-pert, reversed tk-pert)  = {cos(positional, win_rev):.6f}")
