import numpy as np
import pytest

from docpool.embed_store import EmbeddingMatrix
from docpool.errors import ValidationError
from docpool.pert import (
    boilerplate_weights,
    build_window_bank,
    pert_pdf,
    tf_pert,
    tk_pert,
    window_weights,
)

from conftest import make_doc


def windowed_concat_oracle(values, positional, sentence_scale=None):
    """Explicit per-window summation, normalization and concatenation."""
    j, n = positional.shape
    d = values.shape[1]
    out = np.zeros(j * d)
    for jj in range(j):
        sub = np.zeros(d)
        for nn in range(n):
            w = positional[jj, nn]
            if sentence_scale is not None:
                w *= sentence_scale[nn]
            sub += values[nn].astype(np.float64) * w
        norm = np.linalg.norm(sub)
        if norm > 1e-12:
            sub = sub / norm
        out[jj * d : (jj + 1) * d] = sub / np.sqrt(j)
    return out


class TestPertPdf:
    def test_zero_at_and_outside_support(self):
        assert pert_pdf(0.0, 0.0, 0.5, 1.0) == 0.0
        assert pert_pdf(1.0, 0.0, 0.5, 1.0) == 0.0
        assert pert_pdf(-0.3, 0.0, 0.5, 1.0) == 0.0
        assert pert_pdf(1.7, 0.0, 0.5, 1.0) == 0.0

    def test_symmetric_when_mode_centered(self):
        for delta in (0.01, 0.1, 0.3):
            left = pert_pdf(0.5 - delta, 0.0, 0.5, 1.0, gamma=20)
            right = pert_pdf(0.5 + delta, 0.0, 0.5, 1.0, gamma=20)
            assert left == pytest.approx(right, rel=1e-12)

    def test_integrates_to_one(self):
        # trapezoid-rule quadrature oracle at 1e5 points
        for low, mode, high, gamma in [
            (0.0, 0.5, 1.0, 20.0),
            (-0.5, 0.1, 0.9, 20.0),
            (2.0, 2.2, 3.0, 4.0),
        ]:
            xs = np.linspace(low, high, 100_001)
            integral = np.trapezoid(pert_pdf(xs, low, mode, high, gamma), xs)
            assert integral == pytest.approx(1.0, abs=1e-6)

    def test_mode_is_argmax(self):
        xs = np.linspace(0, 1, 10_001)
        ys = pert_pdf(xs, 0.0, 0.3, 1.0, gamma=20)
        assert xs[np.argmax(ys)] == pytest.approx(0.3, abs=1e-3)

    def test_invalid_parameters(self):
        with pytest.raises(ValidationError):
            pert_pdf(0.5, 1.0, 1.5, 1.0)  # low >= high once mode checked
        with pytest.raises(ValidationError):
            pert_pdf(0.5, 0.0, 0.0, 1.0)  # mode on boundary


class TestWindowBank:
    def test_mode_placement(self):
        bank = build_window_bank(16)
        assert bank.modes[0] == pytest.approx(1 / 32)
        assert bank.modes[15] == pytest.approx(31 / 32)

    def test_single_window_covers_everything(self):
        bank = build_window_bank(1)
        assert np.all(bank.cache[0] > 0)

    def test_adjacent_windows_overlap(self):
        bank = build_window_bank(16)
        for j in range(15):
            both = (bank.cache[j] > 0) & (bank.cache[j + 1] > 0)
            assert both.any()

    def test_cache_nonnegative(self):
        bank = build_window_bank(16, 20.0)
        assert np.all(bank.cache >= 0)

    def test_bit_reproducible(self):
        a = build_window_bank(16, 20.0, 1024)
        b = build_window_bank(16, 20.0, 1024)
        assert a.cache.tobytes() == b.cache.tobytes()

    def test_interior_window_symmetry(self):
        bank = build_window_bank(16, 20.0, 1024)
        cells_per_part = bank.resolution // 16
        for j in range(1, 15):  # interior windows: support inside [0, 1]
            center = (2 * j + 1) * cells_per_part // 2  # boundary index of the peak
            for k in range(cells_per_part):
                left = bank.cache[j][center - 1 - k]
                right = bank.cache[j][center + k]
                assert left == pytest.approx(right, abs=1e-9)


class TestWindowWeights:
    def test_rows_sum_to_one_or_zero(self):
        bank = build_window_bank(16)
        for n in (1, 2, 7, 100):
            weights = window_weights(bank, n)
            sums = weights.sum(axis=1)
            for s in sums:
                assert s == pytest.approx(1.0, abs=1e-9) or s == 0.0

    def test_single_sentence(self):
        bank = build_window_bank(4)
        weights = window_weights(bank, 1)
        # x = 0.5 is inside the middle windows' support
        populated = weights[:, 0] > 0
        assert populated.any()
        assert np.all(weights[populated, 0] == 1.0)

    def test_window_mass_concentrates_in_own_part(self):
        bank = build_window_bank(16)
        weights = window_weights(bank, 100)
        for j in range(16):
            if weights[j].sum() == 0:
                continue
            peak_sentence = int(np.argmax(weights[j]))
            part = peak_sentence * 16 // 100
            assert part == j

    def test_needs_positive_n(self):
        bank = build_window_bank(4)
        with pytest.raises(ValidationError):
            window_weights(bank, 0)


class TestBoilerplate:
    def test_disabled_gives_ones(self):
        docs = [make_doc("a"), make_doc("b")]
        weights = boilerplate_weights(docs, enabled=False)
        for doc in docs:
            assert np.array_equal(weights[doc.doc_id], np.ones(doc.n_sentences))

    def test_unique_sentence_weight_one(self):
        docs = [
            make_doc("a", texts=["unique alpha"], domain_id="d1"),
            make_doc("b", texts=["unique beta"], domain_id="d1"),
        ]
        weights = boilerplate_weights(docs, enabled=True)
        assert weights["a"][0] == 1.0

    def test_repeated_sentence_downweighted(self):
        docs = [
            make_doc(f"p{i}", texts=["copyright footer", f"content {i}"], domain_id="dom")
            for i in range(4)
        ]
        weights = boilerplate_weights(docs, enabled=True)
        for i in range(4):
            assert weights[f"p{i}"][0] == pytest.approx(0.25)
            assert weights[f"p{i}"][1] == 1.0

    def test_domains_counted_separately(self):
        docs = [
            make_doc("a1", texts=["footer"], domain_id="x"),
            make_doc("a2", texts=["footer"], domain_id="x"),
            make_doc("b1", texts=["footer"], domain_id="y"),
        ]
        weights = boilerplate_weights(docs, enabled=True)
        assert weights["a1"][0] == pytest.approx(0.5)
        assert weights["b1"][0] == pytest.approx(1.0)


class TestTkPert:
    def test_identical_sentences_give_unit_vector(self, rng):
        bank = build_window_bank(4)
        row = rng.normal(size=8)
        row /= np.linalg.norm(row)
        embs = EmbeddingMatrix(np.tile(row, (10, 1)))
        vec = tk_pert(embs, bank)
        # every sub-vector is row / sqrt(J)
        for j in range(4):
            assert np.allclose(vec[j * 8 : (j + 1) * 8], row / 2.0, atol=1e-6)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)

    def test_single_sentence_subvectors_collinear(self, rng):
        bank = build_window_bank(4)
        row = rng.normal(size=6)
        embs = EmbeddingMatrix(row[None, :])
        vec = tk_pert(embs, bank).reshape(4, 6)
        unit = row / np.linalg.norm(row)
        for sub in vec:
            if np.linalg.norm(sub) > 0:
                cos = sub @ unit / np.linalg.norm(sub)
                assert cos == pytest.approx(1.0, abs=1e-9)

    def test_matches_summation_oracle(self, rng):
        bank = build_window_bank(4)
        embs = EmbeddingMatrix(rng.normal(size=(20, 8)))
        weights = window_weights(bank, 20)
        expected = windowed_concat_oracle(embs.values, weights)
        assert np.allclose(tk_pert(embs, bank), expected, atol=1e-10)

    def test_boilerplate_enters_multiplicatively(self, rng):
        bank = build_window_bank(4)
        embs = EmbeddingMatrix(rng.normal(size=(6, 5)))
        boiler = rng.random(6) * 0.9 + 0.1
        weights = window_weights(bank, 6)
        expected = windowed_concat_oracle(embs.values, weights, boiler)
        assert np.allclose(tk_pert(embs, bank, boiler), expected, atol=1e-10)

    def test_positive_homogeneity(self, rng):
        bank = build_window_bank(8)
        values = rng.normal(size=(12, 4))
        a = tk_pert(EmbeddingMatrix(values), bank)
        b = tk_pert(EmbeddingMatrix(values * 37.5), bank)
        assert np.allclose(a, b, atol=1e-10)

    def test_order_sensitivity(self, rng):
        bank = build_window_bank(8)
        values = rng.normal(size=(12, 4))
        fwd = tk_pert(EmbeddingMatrix(values), bank)
        rev = tk_pert(EmbeddingMatrix(values[::-1]), bank)
        assert not np.allclose(fwd, rev, atol=1e-6)


class TestTfPert:
    def test_constant_tfidf_equals_tk_pert(self, rng):
        bank = build_window_bank(4)
        embs = EmbeddingMatrix(rng.normal(size=(9, 5)))
        plain = tk_pert(embs, bank)
        scaled = tf_pert(embs, bank, np.full(9, 3.7))
        assert np.allclose(plain, scaled, atol=1e-12)

    def test_one_hot_tfidf_collapses_to_single_sentence(self, rng):
        bank = build_window_bank(4)
        values = rng.normal(size=(6, 5))
        embs = EmbeddingMatrix(values)
        scores = np.zeros(6)
        scores[2] = 1.0
        vec = tf_pert(embs, bank, scores).reshape(4, 5)
        unit = values[2].astype(np.float64)
        unit /= np.linalg.norm(unit)
        for sub in vec:
            if np.linalg.norm(sub) > 1e-12:
                assert abs(sub @ unit / np.linalg.norm(sub)) == pytest.approx(1.0, abs=1e-9)

    def test_matches_summation_oracle(self, rng):
        bank = build_window_bank(4)
        embs = EmbeddingMatrix(rng.normal(size=(15, 8)))
        scores = rng.random(15)
        boiler = rng.random(15) * 0.5 + 0.5
        weights = window_weights(bank, 15)
        expected = windowed_concat_oracle(embs.values, weights, scores * boiler)
        assert np.allclose(tf_pert(embs, bank, scores, boiler), expected, atol=1e-10)

    def test_length_mismatch(self, rng):
        bank = build_window_bank(4)
        embs = EmbeddingMatrix(rng.normal(size=(5, 3)))
        with pytest.raises(ValidationError, match="shape"):
            tf_pert(embs, bank, np.ones(4))
