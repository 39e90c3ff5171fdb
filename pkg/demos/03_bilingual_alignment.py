"""
Aligning two document collections
=================================

Simulates a bilingual alignment task: source and target documents share
latent vectors, the target side is perturbed with Gaussian noise, and we
recover the pairing with top-K cosine retrieval plus one-to-one competitive
linking. Recall degrades gracefully as the noise grows.
"""
import numpy as np

from docpool import bootstrap_ci, build_index, match, recall, topk

rng = np.random.default_rng(7)
n_pairs, dim = 400, 64

latents = rng.normal(size=(n_pairs, dim))
src = {f"en{i:03d}": latents[i] for i in range(n_pairs)}
gold = {(f"en{i:03d}", f"fr{i:03d}") for i in range(n_pairs)}

# A few webdomains: matching is one-to-one within each domain.
domains = {}
for i in range(n_pairs):
    domains[f"en{i:03d}"] = domains[f"fr{i:03d}"] = f"domain{i % 4}"

print(f"{'noise':>6} {'recall':>8}   95% interval")
for sigma in (0.0, 0.5, 1.0, 2.0):
    tgt = {f"fr{i:03d}": latents[i] + sigma * rng.normal(size=dim) for i in range(n_pairs)}
    index = build_index(tgt)
    candidates = {src_id: topk(index, vec, k=32) for src_id, vec in src.items()}
    result = match(candidates, domains)
    predicted = result.predicted_pairs()
    ci = bootstrap_ci(
        lambda sample: sum(p in predicted for p in sample) / len(sample),
        sorted(gold),
        n_samples=1000,
        seed=0,
    )
    print(f"{sigma:>6.1f} {recall(result, gold):>8.3f}   {ci.formatted()}")
