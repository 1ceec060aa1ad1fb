"""Zoom-level landmarks: k-means over article positions and cluster naming.

Clustering happens in the 2D map space, not the latent space, so every
cluster is one contiguous region of the picture. Each zoom level gets its
own independent k-means run; cluster names are the terms that are frequent
inside the cluster but rare outside it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_KS = (8, 24, 72, 216)
CONVERGENCE_SHIFT = 1e-6
MAX_LLOYD_ITERS = 300
ADJACENT_NN = 3
SECOND_WORD_COVERAGE = 0.5


class ClusterError(Exception):
    pass


@dataclass
class ClusterLevel:
    level: int
    k: int
    centroids: np.ndarray  # k x 2
    article_assignment: np.ndarray  # n_articles
    word_assignment: np.ndarray  # n_words
    names: list[tuple[str, ...]] = field(default_factory=list)
    coverage: np.ndarray | None = None  # fraction of cluster docs with first term


def _assign(points: np.ndarray, centroids: np.ndarray, chunk: int = 65536):
    """Nearest centroid per point, ties to the lowest cluster index."""
    n = points.shape[0]
    assignment = np.empty(n, dtype=np.int64)
    best_d2 = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        p = points[start : start + chunk]
        d2 = ((p[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2).sum(axis=2)
        assignment[start : start + chunk] = np.argmin(d2, axis=1)
        best_d2[start : start + chunk] = d2[np.arange(p.shape[0]), assignment[start : start + chunk]]
    return assignment, best_d2


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, 2), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid; any pick works
            centroids[c] = points[int(rng.integers(n))]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        idx = min(idx, n - 1)
        centroids[c] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[c]) ** 2).sum(axis=1))
    return centroids


def kmeans(points: np.ndarray, k: int, seed: int = 0):
    """Seeded k-means++ and Lloyd iterations on 2D points.

    Runs until the largest centroid shift drops under CONVERGENCE_SHIFT or
    MAX_LLOYD_ITERS passes. An emptied cluster is reseeded to the point
    currently farthest from its own centroid.

    Returns (centroids k x 2, assignment n).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ClusterError(f"k={k} must be >= 1")
    if k > n:
        raise ClusterError(f"k={k} exceeds point count {n}")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(points, k, rng)
    assignment, best_d2 = _assign(points, centroids)
    for _ in range(MAX_LLOYD_ITERS):
        new_centroids = np.zeros_like(centroids)
        counts = np.bincount(assignment, minlength=k).astype(np.float64)
        np.add.at(new_centroids, assignment, points)
        taken = np.zeros(n, dtype=bool)
        for c in range(k):
            if counts[c] > 0:
                new_centroids[c] /= counts[c]
            else:
                candidates = np.where(~taken, best_d2, -np.inf)
                far = int(np.argmax(candidates))
                taken[far] = True
                new_centroids[c] = points[far]
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        assignment, best_d2 = _assign(points, centroids)
        if shift < CONVERGENCE_SHIFT:
            break
    return centroids, assignment


def assign_words(centroids: np.ndarray, word_coords: np.ndarray) -> np.ndarray:
    """Map each word position to its nearest article-cluster centroid."""
    if word_coords.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    assignment, _ = _assign(np.ascontiguousarray(word_coords, dtype=np.float64), centroids)
    return assignment


def adjacent_pairs(centroids: np.ndarray) -> set[tuple[int, int]]:
    """Clusters whose centroids are mutual members of each other's
    ADJACENT_NN nearest centroid sets."""
    k = centroids.shape[0]
    if k < 2:
        return set()
    d2 = ((centroids[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    m = min(ADJACENT_NN, k - 1)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :m]
    members = [set(row.tolist()) for row in nearest]
    pairs = set()
    for a in range(k):
        for b in members[a]:
            if a in members[b]:
                pairs.add((min(a, int(b)), max(a, int(b))))
    return pairs


def _rank(score_df_pairs):
    """Sort word candidates by score desc, then df desc, then term asc."""
    return sorted(score_df_pairs, key=lambda t: (-t[0], -t[1], t[2]))


def name_clusters(
    article_assignment: np.ndarray,
    word_assignment: np.ndarray,
    k: int,
    centroids: np.ndarray,
    doc_terms: list[set[int]],
    df: np.ndarray,
    terms: list[str],
    adjacency: set[tuple[int, int]] | None = None,
):
    """Pick one or two naming terms per cluster.

    score(w) = i(w) - o(w): the fraction of the cluster's articles containing
    w minus the fraction of all articles containing it. The top-scoring word
    assigned to the cluster wins; if it covers under half the cluster's
    articles, a second word is chosen the same way over the uncovered
    articles. Adjacent clusters sharing a first term: the later-indexed one
    falls back to its next-best candidate.

    Returns (names: list of term tuples, coverage: float array).
    """
    n_words = len(terms)
    if n_words == 0:
        raise ClusterError("no retained words to name clusters with")
    T = len(doc_terms)
    if adjacency is None:
        adjacency = adjacent_pairs(centroids)
    o = df.astype(np.float64) / T

    cluster_docs = [np.flatnonzero(article_assignment == c) for c in range(k)]
    cluster_words = [np.flatnonzero(word_assignment == c) for c in range(k)]

    def in_fractions(docs: np.ndarray) -> dict[int, float]:
        counts: dict[int, int] = {}
        for d in docs:
            for w in doc_terms[d]:
                counts[w] = counts.get(w, 0) + 1
        if len(docs) == 0:
            return {}
        return {w: c / len(docs) for w, c in counts.items()}

    def ranked(words: np.ndarray, i_frac: dict[int, float]):
        return _rank(
            [(i_frac.get(int(w), 0.0) - o[w], int(df[w]), terms[int(w)], int(w)) for w in words]
        )

    names: list[tuple[str, ...]] = []
    coverage = np.zeros(k, dtype=np.float64)
    used_first: list[str | None] = [None] * k
    globally_used: set[int] = set()
    all_words = np.arange(n_words)

    for c in range(k):
        docs = cluster_docs[c]
        i_frac = in_fractions(docs)
        own = cluster_words[c]
        candidates = ranked(own, i_frac)
        if len(candidates) == 0:
            candidates = [
                t for t in ranked(all_words, i_frac) if t[3] not in globally_used
            ]
        blocked = {
            used_first[a if b == c else b]
            for a, b in adjacency
            if c in (a, b) and min(a, b) < c
        }
        choice = next((t for t in candidates if t[2] not in blocked), None)
        if choice is None:
            # own pool exhausted by the distinctness rule; widen to all words
            choice = next(
                (
                    t
                    for t in ranked(all_words, i_frac)
                    if t[2] not in blocked and t[3] not in globally_used
                ),
                None,
            )
        if choice is None:
            raise ClusterError(
                f"cluster {c}: vocabulary exhausted while enforcing distinct names"
            )
        _, _, term, wid = choice
        used_first[c] = term
        globally_used.add(wid)
        cov = i_frac.get(wid, 0.0)
        coverage[c] = cov
        if cov < SECOND_WORD_COVERAGE:
            rest = np.array(
                [d for d in docs if wid not in doc_terms[d]], dtype=np.int64
            )
            i2 = in_fractions(rest)
            pool = [w for w in own if int(w) != wid]
            second = ranked(np.array(pool, dtype=np.int64), i2) if pool else []
            if not second:
                second = [
                    t
                    for t in ranked(all_words, i2)
                    if t[3] != wid and t[3] not in globally_used
                ]
            if second:
                names.append((term, second[0][2]))
            else:
                names.append((term,))
        else:
            names.append((term,))
    return names, coverage


def build_levels(
    article_coords: np.ndarray,
    word_coords: np.ndarray,
    doc_terms: list[set[int]],
    df: np.ndarray,
    terms: list[str],
    ks: tuple[int, ...] = DEFAULT_KS,
    seed: int = 0,
) -> list[ClusterLevel]:
    """One independent ClusterLevel per k in ks (strictly increasing)."""
    ks = tuple(int(k) for k in ks)
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ClusterError(f"ks={ks} must be strictly increasing")
    if ks and ks[-1] > article_coords.shape[0]:
        raise ClusterError(
            f"max k {ks[-1]} exceeds article count {article_coords.shape[0]}"
        )
    levels = []
    for lvl, k in enumerate(ks):
        centroids, assignment = kmeans(article_coords, k, seed=seed + lvl)
        word_assignment = assign_words(centroids, word_coords)
        names, coverage = name_clusters(
            assignment, word_assignment, k, centroids, doc_terms, df, terms
        )
        levels.append(
            ClusterLevel(
                level=lvl,
                k=k,
                centroids=centroids,
                article_assignment=assignment,
                word_assignment=word_assignment,
                names=names,
                coverage=coverage,
            )
        )
    return levels
