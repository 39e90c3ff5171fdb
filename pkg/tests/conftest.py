import numpy as np
import pytest

from docpool.corpus import Document, Sentence


def make_doc(
    doc_id="d0",
    texts=("first sentence here", "second one", "third and last"),
    subwords=None,
    lang="en",
    labels=(),
    domain_id=None,
    split="test",
):
    subwords = subwords or [len(t.split()) for t in texts]
    sentences = [Sentence(text=t, subword_count=c) for t, c in zip(texts, subwords)]
    return Document(
        doc_id=doc_id,
        lang=lang,
        sentences=sentences,
        labels=list(labels),
        domain_id=domain_id,
        split=split,
    )


def random_doc(rng, doc_id="d0", n_sentences=None, vocab_size=30, max_words=8):
    """Document with random word content, for TF-IDF oracle tests."""
    n = n_sentences or int(rng.integers(1, 9))
    vocab = [f"w{i}" for i in range(vocab_size)]
    texts = []
    for _ in range(n):
        k = int(rng.integers(1, max_words + 1))
        texts.append(" ".join(rng.choice(vocab, size=k)))
    return make_doc(doc_id=doc_id, texts=texts, subwords=[1] * n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
