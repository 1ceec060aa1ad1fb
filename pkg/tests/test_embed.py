import numpy as np
import pytest
import scipy.sparse as sp

from cartomap.embed import (
    EmbedError,
    LatentEmbedding,
    embed_aggregates,
    embed_articles,
    embed_terms,
    fit_lsa,
    load_embedding,
    orthonormality_defect,
    save_embedding,
)


def sparse_random(T, V, density, seed):
    rng = np.random.default_rng(seed)
    return sp.random(
        T, V, density=density, format="csr", random_state=rng, dtype=np.float64
    )


class TestFitLsa:
    def test_rank_one_matrix_recovered_exactly(self):
        # M = s * u v^T has a one-component SVD we can write down
        u = np.zeros(30)
        u[::3] = 1.0
        u /= np.linalg.norm(u)
        v = np.linspace(1, 2, 12)
        v /= np.linalg.norm(v)
        M = sp.csr_matrix(5.0 * np.outer(u, v))
        model = fit_lsa(M, d=1, seed=0)
        assert model.singular_values[0] == pytest.approx(5.0, abs=1e-8)
        comp = model.term_components[:, 0]
        # sign fixed so the largest-|loading| coordinate is positive
        assert comp[np.argmax(np.abs(comp))] > 0
        assert np.allclose(np.abs(comp), v, atol=1e-8)

    def test_relative_error_close_to_exact_truncation(self):
        M = sparse_random(500, 2000, density=0.01, seed=3)
        d = 20
        model = fit_lsa(M, d=d, seed=0)
        dense = M.toarray()
        U, s, Vt = np.linalg.svd(dense, full_matrices=False)
        exact = (U[:, :d] * s[:d]) @ Vt[:d]
        exact_err = np.linalg.norm(dense - exact)
        approx = (M @ model.term_components) @ model.term_components.T
        approx_err = np.linalg.norm(dense - approx)
        assert approx_err <= 1.05 * exact_err

    def test_component_orthonormality(self):
        M = sparse_random(200, 300, density=0.02, seed=5)
        model = fit_lsa(M, d=16, seed=1)
        assert orthonormality_defect(model) < 1e-6

    def test_deterministic_given_seed(self):
        M = sparse_random(80, 120, density=0.05, seed=7)
        a = fit_lsa(M, d=8, seed=11)
        b = fit_lsa(M, d=8, seed=11)
        assert np.array_equal(a.term_components, b.term_components)
        assert np.array_equal(a.singular_values, b.singular_values)

    def test_d_out_of_range(self):
        M = sparse_random(10, 6, density=0.5, seed=0)
        with pytest.raises(EmbedError, match="d="):
            fit_lsa(M, d=7)
        with pytest.raises(EmbedError):
            fit_lsa(M, d=0)

    def test_nonfinite_rejected(self):
        M = sp.csr_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))
        with pytest.raises(EmbedError, match="finite"):
            fit_lsa(M, d=1)

    def test_singular_values_nonincreasing(self):
        M = sparse_random(100, 150, density=0.05, seed=2)
        model = fit_lsa(M, d=10, seed=0)
        assert np.all(np.diff(model.singular_values) <= 1e-12)


class TestEmbeddings:
    def setup_method(self):
        self.M = sparse_random(60, 90, density=0.1, seed=4)
        self.model = fit_lsa(self.M, d=6, seed=0)

    def test_article_rows_are_projections(self):
        emb = embed_articles(self.model, self.M)
        assert emb.entity_type == "article" and emb.matrix.shape == (60, 6)
        expected = self.M.toarray() @ self.model.term_components
        assert np.allclose(emb.matrix, expected, atol=1e-12)

    def test_article_shape_mismatch(self):
        bad = sparse_random(10, 91, density=0.1, seed=0)
        with pytest.raises(EmbedError, match="columns"):
            embed_articles(self.model, bad)

    def test_terms_scaled_by_singular_values(self):
        emb = embed_terms(self.model)
        assert emb.entity_type == "word" and emb.matrix.shape == (90, 6)
        assert np.allclose(
            emb.matrix, self.model.term_components * self.model.singular_values
        )

    def test_aggregates_are_means(self):
        art = embed_articles(self.model, self.M)
        inc = sp.csr_matrix(
            np.array([[1, 0]] * 30 + [[0, 1]] * 30, dtype=np.float64)
        )
        agg = embed_aggregates(inc, art, "author")
        assert np.allclose(agg.matrix[0], art.matrix[:30].mean(axis=0))
        assert np.allclose(agg.matrix[1], art.matrix[30:].mean(axis=0))

    def test_aggregate_with_no_articles_rejected(self):
        art = embed_articles(self.model, self.M)
        inc = sp.csr_matrix((60, 2))
        with pytest.raises(EmbedError, match="author entity 0"):
            embed_aggregates(inc, art, "author")


class TestEmbeddingFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        emb = LatentEmbedding("author", rng.standard_normal((7, 5)).astype(np.float64))
        save_embedding(emb, tmp_path / "e.bin", seed=42)
        back, seed = load_embedding(tmp_path / "e.bin")
        assert seed == 42
        assert back.entity_type == "author"
        assert np.allclose(back.matrix, emb.matrix.astype(np.float32))

    def test_truncated_file_rejected(self, tmp_path):
        emb = LatentEmbedding("word", np.ones((3, 2)))
        save_embedding(emb, tmp_path / "e.bin")
        data = (tmp_path / "e.bin").read_bytes()
        (tmp_path / "bad.bin").write_bytes(data[:-4])
        with pytest.raises(EmbedError):
            load_embedding(tmp_path / "bad.bin")

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "bad.bin").write_bytes(b"XXXX" + b"\x00" * 40)
        with pytest.raises(EmbedError):
            load_embedding(tmp_path / "bad.bin")
