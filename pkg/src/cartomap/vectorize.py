"""Text vectorization: tokens, n-grams, vocabulary, and the natural-space matrices.

The natural space represents every entity as a sparse vector over the T
articles: articles get tf-idf rows over the n-gram vocabulary, authors
and labs get binary authorship columns.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import EntityCatalog

# Hard n-gram boundary marker produced by tokenize() at punctuation.
BOUNDARY = None

# Unicode-aware: runs of letters/digits are tokens, whitespace separates
# them, anything else (punctuation, symbols) is a boundary.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]+", re.UNICODE)


class VectorizeError(Exception):
    pass


def tokenize(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> list:
    """Lower-case alphanumeric tokens with punctuation boundaries kept.

    Stopwords are removed without introducing a boundary; punctuation
    becomes a BOUNDARY marker so n-grams never cross it. Consecutive and
    leading/trailing boundaries are collapsed away.
    """
    out: list = []
    for match in _TOKEN_RE.finditer(text.lower()):
        tok = match.group()
        if tok[0].isalnum():
            if tok not in stopwords:
                out.append(tok)
        else:
            if out and out[-1] is not BOUNDARY:
                out.append(BOUNDARY)
    while out and out[-1] is BOUNDARY:
        out.pop()
    return out


def extract_ngrams(tokens: Sequence, n_max: int = 5) -> Counter:
    """All contiguous runs of 1..n_max tokens not crossing a boundary.

    Returns a multiset (Counter) of space-joined n-grams.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    grams: Counter = Counter()
    run: list[str] = []

    def flush(run: list[str]) -> None:
        L = len(run)
        for n in range(1, min(n_max, L) + 1):
            for i in range(L - n + 1):
                grams[" ".join(run[i : i + n])] += 1

    for tok in tokens:
        if tok is BOUNDARY:
            flush(run)
            run = []
        else:
            run.append(tok)
    flush(run)
    return grams


@dataclass
class Vocabulary:
    """Retained n-gram terms, ordered by (df descending, term ascending)."""

    terms: list[str]
    df: np.ndarray          # documents containing each term
    total: np.ndarray       # total corpus occurrences of each term
    n_max: int = 5
    m_min: int = 25
    v_cap: int = 64_000

    def __post_init__(self) -> None:
        self.index = {t: j for j, t in enumerate(self.terms)}

    def __len__(self) -> int:
        return len(self.terms)

    def dump_tsv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write("term\tdf\ttotal_count\n")
            for j, term in enumerate(self.terms):
                fh.write(f"{term}\t{int(self.df[j])}\t{int(self.total[j])}\n")


def build_vocab(
    docs: Sequence[Counter],
    m_min: int = 25,
    v_cap: int = 64_000,
    n_max: int = 5,
) -> Vocabulary:
    """Build the vocabulary from per-document n-gram multisets.

    Terms with fewer than m_min total occurrences are dropped; if more
    than v_cap survive, the v_cap highest-df terms are kept. Ordering is
    (df descending, term lexicographic) so identical corpora always get
    identical column ids.
    """
    if not docs:
        raise VectorizeError("no documents")
    total: Counter = Counter()
    df: Counter = Counter()
    for grams in docs:
        total.update(grams)
        df.update(grams.keys())
    kept = [t for t, c in total.items() if c >= m_min]
    if not kept:
        raise VectorizeError(
            f"empty vocabulary: no term reaches m_min={m_min} occurrences"
        )
    kept.sort(key=lambda t: (-df[t], t))
    if len(kept) > v_cap:
        kept = kept[:v_cap]
    return Vocabulary(
        terms=kept,
        df=np.array([df[t] for t in kept], dtype=np.int64),
        total=np.array([total[t] for t in kept], dtype=np.int64),
        n_max=n_max,
        m_min=m_min,
        v_cap=v_cap,
    )


def tfidf_matrix(docs: Sequence[Counter], vocab: Vocabulary) -> sp.csr_matrix:
    """T x V tf-idf matrix: tf(i,j) * (ln((1+T)/(1+df(j))) + 1), rows L2-normalized.

    Documents with no retained term keep an all-zero row.
    """
    T = len(docs)
    idf = np.log((1.0 + T) / (1.0 + vocab.df.astype(np.float64))) + 1.0

    indptr = np.zeros(T + 1, dtype=np.int64)
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for i, grams in enumerate(docs):
        cols = sorted(
            vocab.index[t] for t in grams.keys() if t in vocab.index
        )
        row = np.array(cols, dtype=np.int32)
        vals = np.array(
            [grams[vocab.terms[j]] for j in cols], dtype=np.float64
        ) * idf[row] if cols else np.empty(0, dtype=np.float64)
        norm = np.sqrt((vals**2).sum())
        if norm > 0:
            vals = vals / norm
        indices.append(row)
        data.append(vals)
        indptr[i + 1] = indptr[i] + len(row)

    mat = sp.csr_matrix(
        (
            np.concatenate(data) if data else np.empty(0),
            np.concatenate(indices) if indices else np.empty(0, dtype=np.int32),
            indptr,
        ),
        shape=(T, len(vocab)),
    )
    mat.sort_indices()
    return mat


def incidence_matrix(catalog: EntityCatalog, entity_type: str) -> sp.csr_matrix:
    """T x L binary matrix; entry (i,k)=1 iff entity k appears on article i."""
    if entity_type == "author":
        doc_lists = catalog.author_docs
    elif entity_type == "lab":
        doc_lists = catalog.lab_docs
    else:
        raise ValueError(f"incidence matrices exist for authors and labs, not '{entity_type}'")
    T, L = catalog.T, len(doc_lists)
    rows = np.array([i for k, docs in enumerate(doc_lists) for i in docs], dtype=np.int64)
    cols = np.array([k for k, docs in enumerate(doc_lists) for _ in docs], dtype=np.int64)
    mat = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(T, L)
    )
    mat.sort_indices()
    return mat


def doc_term_sets(docs: Sequence[Counter], vocab: Vocabulary) -> list[set[int]]:
    """Per-article set of retained term ids (presence, not counts)."""
    return [
        {vocab.index[t] for t in grams.keys() if t in vocab.index} for grams in docs
    ]


def ngram_docs(
    texts: Iterable[str],
    stopwords: frozenset[str] | set[str] = frozenset(),
    n_max: int = 5,
) -> list[Counter]:
    """Tokenize and n-gram a sequence of document texts."""
    return [extract_ngrams(tokenize(text, stopwords), n_max) for text in texts]
