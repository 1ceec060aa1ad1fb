"""Latent semantic embedding: truncated randomized SVD over the tf-idf matrix.

All entity types end up in one d-dimensional latent space where Euclidean
distance is the similarity used for neighbor search: articles as row
projections of the tf-idf matrix, terms as scaled right-singular vectors,
authors/labs as means of their articles.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

OVERSAMPLE = 10
POWER_ITERS = 4

_MAGIC = b"CEMB"
_HEADER = struct.Struct("<4sB8sIIq")
_FORMAT_VERSION = 1


class EmbedError(Exception):
    pass


@dataclass
class LatentModel:
    d: int
    term_components: np.ndarray  # V x d, orthonormal columns
    singular_values: np.ndarray  # d, nonincreasing
    fitted_T: int
    seed: int


@dataclass
class LatentEmbedding:
    entity_type: str
    matrix: np.ndarray  # n x d, row id = entity id

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def fit_lsa(M: sp.spmatrix, d: int, seed: int = 0) -> LatentModel:
    """Randomized truncated SVD of the T x V tf-idf matrix.

    Uses Gaussian range finding with OVERSAMPLE extra columns and
    POWER_ITERS QR-stabilized power iterations, which keeps the relative
    Frobenius error within a few percent of the exact rank-d optimum.
    Component signs are fixed so each component's largest-magnitude term
    loading is positive, making runs comparable.
    """
    T, V = M.shape
    if d < 1 or d > min(T, V):
        raise EmbedError(f"d={d} must be in [1, min(T={T}, V={V})]")
    if not np.all(np.isfinite(M.data)):
        raise EmbedError("matrix contains non-finite entries")

    rng = np.random.default_rng(seed)
    k = min(d + OVERSAMPLE, min(T, V))
    omega = rng.standard_normal((V, k))
    Q, _ = np.linalg.qr(M @ omega)
    for _ in range(POWER_ITERS):
        Q, _ = np.linalg.qr(M.T @ Q)
        Q, _ = np.linalg.qr(M @ Q)
    B = Q.T @ M  # k x V, dense
    B = np.asarray(B)
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)

    components = Vt[:d].T.copy()  # V x d
    # SVD sign ambiguity: flip so the largest |loading| of each component
    # is positive.
    for j in range(d):
        i = int(np.argmax(np.abs(components[:, j])))
        if components[i, j] < 0:
            components[:, j] = -components[:, j]
    return LatentModel(
        d=d,
        term_components=components,
        singular_values=s[:d].copy(),
        fitted_T=T,
        seed=seed,
    )


def embed_articles(model: LatentModel, M: sp.spmatrix) -> LatentEmbedding:
    """Project article rows: row i of M times the term components (T x d)."""
    if M.shape[1] != model.term_components.shape[0]:
        raise EmbedError(
            f"matrix has {M.shape[1]} columns, model was fitted on "
            f"{model.term_components.shape[0]} terms"
        )
    return LatentEmbedding("article", np.asarray(M @ model.term_components))


def embed_terms(model: LatentModel) -> LatentEmbedding:
    """Term k's vector is component row k scaled by the singular values.

    The scaling matches the article side (both carry one factor of sigma),
    so words and articles share comparable geometry.
    """
    return LatentEmbedding(
        "word", model.term_components * model.singular_values[np.newaxis, :]
    )


def embed_aggregates(
    incidence: sp.spmatrix, article_emb: LatentEmbedding, entity_type: str
) -> LatentEmbedding:
    """Bag-of-articles entities: mean of their articles' latent vectors."""
    if incidence.shape[0] != article_emb.n:
        raise EmbedError(
            f"incidence has {incidence.shape[0]} article rows, embedding has {article_emb.n}"
        )
    counts = np.asarray(incidence.sum(axis=0)).ravel()
    if np.any(counts == 0):
        empty = int(np.argmin(counts))
        raise EmbedError(
            f"{entity_type} entity {empty} aggregates zero articles; "
            "catalog filtering should have removed it"
        )
    sums = np.asarray(incidence.T @ article_emb.matrix)
    return LatentEmbedding(entity_type, sums / counts[:, np.newaxis])


def orthonormality_defect(model: LatentModel) -> float:
    """Max-norm deviation of term_components' Gram matrix from identity."""
    gram = model.term_components.T @ model.term_components
    return float(np.max(np.abs(gram - np.eye(model.d))))


def save_embedding(emb: LatentEmbedding, path: str | Path, seed: int = 0) -> None:
    """Binary dump: header (magic, type, n, d, seed) + row-major float32."""
    type_bytes = emb.entity_type.encode("ascii")[:8].ljust(8, b"\0")
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _FORMAT_VERSION, type_bytes, emb.n, emb.d, seed))
        fh.write(np.ascontiguousarray(emb.matrix, dtype=np.float32).tobytes())


def load_embedding(path: str | Path) -> tuple[LatentEmbedding, int]:
    with Path(path).open("rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise EmbedError(f"truncated embedding file: {path}")
        magic, version, type_bytes, n, d, seed = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise EmbedError(f"not an embedding dump: {path}")
        if version != _FORMAT_VERSION:
            raise EmbedError(f"unsupported embedding dump version {version}")
        data = np.frombuffer(fh.read(n * d * 4), dtype=np.float32)
        if data.size != n * d:
            raise EmbedError(f"truncated embedding payload: {path}")
    emb = LatentEmbedding(type_bytes.rstrip(b"\0").decode("ascii"), data.reshape(n, d).copy())
    return emb, seed
