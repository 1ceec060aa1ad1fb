import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cartomap.corpus import CorpusRecord, build_catalog
from cartomap.stopwords import ENGLISH, for_language
from cartomap.vectorize import (
    BOUNDARY,
    VectorizeError,
    build_vocab,
    doc_term_sets,
    extract_ngrams,
    incidence_matrix,
    ngram_docs,
    tfidf_matrix,
    tokenize,
)


class TestTokenize:
    def test_lowercases(self):
        assert tokenize("Deep LEARNING") == ["deep", "learning"]

    def test_punctuation_becomes_single_boundary(self):
        assert tokenize("a, b") == ["a", BOUNDARY, "b"]
        assert tokenize("a ,;! b") == ["a", BOUNDARY, "b"]

    def test_edge_boundaries_trimmed(self):
        assert tokenize("...a b...") == ["a", "b"]

    def test_stopwords_removed_without_boundary(self):
        assert tokenize("cats and dogs", ENGLISH) == ["cats", "dogs"]

    def test_numbers_kept(self):
        assert tokenize("top 10 results") == ["top", "10", "results"]

    @given(st.text(max_size=80))
    @settings(max_examples=100, deadline=None)
    def test_shape_invariants(self, text):
        toks = tokenize(text, ENGLISH)
        for prev, cur in zip(toks, toks[1:]):
            assert not (prev is BOUNDARY and cur is BOUNDARY)
        if toks:
            assert toks[0] is not BOUNDARY and toks[-1] is not BOUNDARY
        for t in toks:
            if t is not BOUNDARY:
                assert t == t.lower() and t not in ENGLISH


class TestExtractNgrams:
    def test_boundary_blocks_ngrams(self):
        grams = extract_ngrams(["a", BOUNDARY, "b"], n_max=2)
        assert grams == Counter({"a": 1, "b": 1})

    def test_six_tokens_nmax5_gives_twenty_grams(self):
        toks = ["t0", "t1", "t2", "t3", "t4", "t5"]
        grams = extract_ngrams(toks, n_max=5)
        # sum over n=1..5 of (6 - n + 1)
        assert sum(grams.values()) == 20
        assert grams["t0 t1 t2 t3 t4"] == 1
        assert "t0 t1 t2 t3 t4 t5" not in grams

    def test_repeats_counted(self):
        assert extract_ngrams(["x", "x"], n_max=2) == Counter({"x": 2, "x x": 1})

    def test_nmax_validated(self):
        with pytest.raises(ValueError):
            extract_ngrams(["a"], n_max=0)

    @given(
        st.lists(st.sampled_from(["a", "b", "c", BOUNDARY]), max_size=12),
        st.integers(1, 5),
    )
    @settings(max_examples=100, deadline=None)
    def test_total_count_formula(self, toks, n_max):
        grams = extract_ngrams(toks, n_max)
        runs = []
        cur = 0
        for t in toks:
            if t is BOUNDARY:
                runs.append(cur)
                cur = 0
            else:
                cur += 1
        runs.append(cur)
        expected = sum(
            sum(L - n + 1 for n in range(1, min(n_max, L) + 1)) for L in runs
        )
        assert sum(grams.values()) == expected


class TestVocab:
    def test_m_min_threshold_on_total_occurrences(self):
        docs = [Counter({"hot": 2}), Counter({"hot": 1, "cold": 1})]
        vocab = build_vocab(docs, m_min=3, v_cap=10)
        assert vocab.terms == ["hot"]

    def test_ordering_df_desc_then_lexicographic(self):
        docs = [
            Counter({"b": 1, "a": 1, "c": 1}),
            Counter({"b": 1, "c": 1}),
        ]
        vocab = build_vocab(docs, m_min=1, v_cap=10)
        assert vocab.terms == ["b", "c", "a"]

    def test_v_cap_keeps_highest_df(self):
        docs = [Counter({"a": 1, "b": 1}), Counter({"a": 1})]
        vocab = build_vocab(docs, m_min=1, v_cap=1)
        assert vocab.terms == ["a"]

    def test_empty_vocab_is_error(self):
        with pytest.raises(VectorizeError, match="m_min"):
            build_vocab([Counter({"once": 1})], m_min=2)

    def test_dump_tsv_roundtrippable(self, tmp_path):
        docs = [Counter({"a": 2, "b": 1})]
        vocab = build_vocab(docs, m_min=1)
        vocab.dump_tsv(tmp_path / "v.tsv")
        lines = (tmp_path / "v.tsv").read_text().splitlines()
        assert lines[0] == "term\tdf\ttotal_count"
        assert lines[1] == "a\t1\t2"

    def test_deterministic(self):
        docs = [Counter({"x": 5, "y": 5, "z": 5})]
        a = build_vocab(docs, m_min=1)
        b = build_vocab(docs, m_min=1)
        assert a.terms == b.terms


class TestTfidf:
    def test_hand_computed_two_doc_corpus(self):
        # D1 = "a b", D2 = "a"; n_max=2, everything kept
        docs = ngram_docs(["a b", "a"], n_max=2)
        vocab = build_vocab(docs, m_min=1, v_cap=10, n_max=2)
        # df: a=2; "a b"=1; b=1 -> order a, "a b", b ("a b" < "b")
        assert vocab.terms == ["a", "a b", "b"]
        mat = tfidf_matrix(docs, vocab).toarray()
        idf_rare = math.log((1 + 2) / (1 + 1)) + 1
        row1 = np.array([1.0, idf_rare, idf_rare])
        row1 /= np.linalg.norm(row1)
        assert np.allclose(mat[0], row1, atol=1e-12)
        assert np.allclose(mat[1], [1.0, 0.0, 0.0], atol=1e-12)

    def test_rows_unit_norm_or_zero(self):
        docs = ngram_docs(["x y z", "zzz unseen"], n_max=1)
        vocab = build_vocab(docs[:1], m_min=1)
        mat = tfidf_matrix(docs, vocab)
        norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
        assert norms[0] == pytest.approx(1.0, abs=1e-12)

    def test_doc_without_retained_terms_is_zero_row(self):
        docs = ngram_docs(["kept kept", "gone"], n_max=1)
        vocab = build_vocab(docs, m_min=2)
        mat = tfidf_matrix(docs, vocab)
        assert mat[1].nnz == 0

    def test_idf_weights_rare_terms_higher(self):
        texts = ["common rare", "common", "common"]
        docs = ngram_docs(texts, n_max=1)
        vocab = build_vocab(docs, m_min=1)
        mat = tfidf_matrix(docs, vocab).toarray()
        j_common = vocab.index["common"]
        j_rare = vocab.index["rare"]
        assert mat[0, j_rare] > mat[0, j_common]

    @given(st.lists(st.lists(st.sampled_from("abcde"), min_size=1, max_size=6), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_norm_property(self, word_docs):
        texts = [" ".join(ws) for ws in word_docs]
        docs = ngram_docs(texts, n_max=3)
        vocab = build_vocab(docs, m_min=1, v_cap=1000, n_max=3)
        mat = tfidf_matrix(docs, vocab)
        norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
        for i, grams in enumerate(docs):
            if any(t in vocab.index for t in grams):
                assert norms[i] == pytest.approx(1.0, abs=1e-9)
            else:
                assert norms[i] == 0.0


class TestIncidence:
    def make_catalog(self):
        records = [
            CorpusRecord("D0", title="t", authors=["A", "B"], labs=["L1"]),
            CorpusRecord("D1", title="t", authors=["A"], labs=["L1"]),
            CorpusRecord("D2", title="t", authors=["A", "B"], labs=["L2"]),
        ]
        return build_catalog(records, min_docs=1)

    def test_author_incidence(self):
        cat = self.make_catalog()
        inc = incidence_matrix(cat, "author").toarray()
        assert inc.shape == (3, 2)
        assert inc.tolist() == [[1, 1], [1, 0], [1, 1]]

    def test_lab_incidence(self):
        cat = self.make_catalog()
        inc = incidence_matrix(cat, "lab").toarray()
        assert inc.tolist() == [[1, 0], [1, 0], [0, 1]]

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError):
            incidence_matrix(self.make_catalog(), "word")


class TestDocTermSets:
    def test_presence_sets_match_matrix_support(self):
        docs = ngram_docs(["a a b", "b c"], n_max=1)
        vocab = build_vocab(docs, m_min=1)
        sets = doc_term_sets(docs, vocab)
        mat = tfidf_matrix(docs, vocab)
        for i in range(2):
            assert sets[i] == set(mat.indices[mat.indptr[i] : mat.indptr[i + 1]].tolist())


class TestStopwordLists:
    def test_known_languages(self):
        assert "the" in for_language("en")
        assert "le" in for_language("fr")
        assert for_language("none") == frozenset()

    def test_unknown_language_rejected(self):
        with pytest.raises(ValueError):
            for_language("tlh")
