"""k-nearest-neighbor search in the latent space.

Two routes with one result contract (ids sorted by (distance, id)):

- knn_exact: chunked dense distance computation, the reference answer.
- HnswIndex / knn_approx: a navigable small-world graph index. Build and
  query cost grow roughly as n*log(n) instead of n^2, at a small recall
  cost. Construction is sequential and seeded, so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF = 64
_MAX_LEVEL = 32


class NeighborError(Exception):
    pass


@dataclass
class NeighborLists:
    """kNN results between two entity types.

    ids[i, :] are target entity ids sorted by (distance, id) ascending;
    rows may be shorter than k conceptually, padded with id -1 / dist inf.
    """

    query_type: str
    target_type: str
    k: int
    ids: np.ndarray  # (n_queries, k) int64
    dists: np.ndarray  # (n_queries, k) float64


def knn_exact(
    X: np.ndarray,
    Q: np.ndarray | None = None,
    k: int = 10,
    exclude_self: bool = False,
    chunk: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest rows of X for each row of Q (Q defaults to X).

    exclude_self drops index-equal pairs and only makes sense when Q is X.
    Ties are broken by lower row id. Returns (ids int64 [nq, k],
    dists float64 [nq, k]).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    self_query = Q is None
    Q = X if self_query else np.ascontiguousarray(Q, dtype=np.float64)
    if exclude_self and not self_query:
        raise NeighborError("exclude_self requires querying the indexed set itself")
    n = X.shape[0]
    avail = n - 1 if exclude_self else n
    if k < 1 or k > avail:
        raise NeighborError(f"k={k} not in [1, {avail}]")

    x_sq = np.einsum("ij,ij->i", X, X)
    ids = np.empty((Q.shape[0], k), dtype=np.int64)
    dists = np.empty((Q.shape[0], k), dtype=np.float64)
    for start in range(0, Q.shape[0], chunk):
        q = Q[start : start + chunk]
        d2 = x_sq[np.newaxis, :] - 2.0 * (q @ X.T)
        d2 += np.einsum("ij,ij->i", q, q)[:, np.newaxis]
        np.maximum(d2, 0.0, out=d2)
        if exclude_self:
            rows = np.arange(q.shape[0])
            d2[rows, start + rows] = np.inf
        # argpartition finds the k smallest values; ties at the boundary are
        # then resolved exactly by re-ranking everything <= the k-th value.
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        dmax = d2[np.arange(q.shape[0])[:, np.newaxis], part].max(axis=1)
        for i in range(q.shape[0]):
            cand = np.flatnonzero(d2[i] <= dmax[i])
            order = np.argsort(d2[i, cand], kind="stable")[:k]
            ids[start + i] = cand[order]
            dists[start + i] = np.sqrt(d2[i, cand[order]])
    return ids, dists


# ---------------------------------------------------------------------------
# Graph index kernels. All flat arrays, single-threaded, no Python objects,
# so the whole build is deterministic for a fixed seed.
# ---------------------------------------------------------------------------

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, inline="always")
def _mix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _draw_levels(n, M, seed, out):
    state = np.uint64(seed)
    inv_log_m = 1.0 / np.log(M)
    for i in range(n):
        state, z = _mix64(state)
        u = (float(z >> np.uint64(11)) + 1.0) * (2.0 ** -53)
        lvl = int(-np.log(u) * inv_log_m)
        if lvl > _MAX_LEVEL:
            lvl = _MAX_LEVEL
        out[i] = lvl


@njit(cache=True, inline="always")
def _d2(X, a, q):
    s = 0.0
    for j in range(X.shape[1]):
        diff = X[a, j] - q[j]
        s += diff * diff
    return s


@njit(cache=True, inline="always")
def _slot(offsets, M, M0, node, layer):
    if layer == 0:
        return offsets[node], M0
    return offsets[node] + M0 + (layer - 1) * M, M


@njit(cache=True, inline="always")
def _lt(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True)
def _heap_push_min(hd, hi, size, d, i):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _lt(hd[pos], hi[pos], hd[parent], hi[parent]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop_min(hd, hi, size):
    size -= 1
    hd[0], hd[size] = hd[size], hd[0]
    hi[0], hi[size] = hi[size], hi[0]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _lt(hd[right], hi[right], hd[left], hi[left]):
            best = right
        if _lt(hd[best], hi[best], hd[pos], hi[pos]):
            hd[pos], hd[best] = hd[best], hd[pos]
            hi[pos], hi[best] = hi[best], hi[pos]
            pos = best
        else:
            break
    return size


@njit(cache=True)
def _heap_push_max(hd, hi, size, d, i):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _lt(hd[parent], hi[parent], hd[pos], hi[pos]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop_max(hd, hi, size):
    size -= 1
    hd[0], hd[size] = hd[size], hd[0]
    hi[0], hi[size] = hi[size], hi[0]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _lt(hd[left], hi[left], hd[right], hi[right]):
            best = right
        if _lt(hd[pos], hi[pos], hd[best], hi[best]):
            hd[pos], hd[best] = hd[best], hd[pos]
            hi[pos], hi[best] = hi[best], hi[pos]
            pos = best
        else:
            break
    return size


@njit(cache=True)
def _greedy_descend(X, adj, offsets, counts, M, M0, q, ep, layer):
    d = _d2(X, ep, q)
    improved = True
    while improved:
        improved = False
        base, _ = _slot(offsets, M, M0, ep, layer)
        for t in range(counts[ep, layer]):
            e = adj[base + t]
            de = _d2(X, e, q)
            if _lt(de, e, d, ep):
                d = de
                ep = e
                improved = True
    return ep, d


@njit(cache=True)
def _search_layer(
    X, adj, offsets, counts, M, M0, q, ep, ef, layer,
    visited, stamp, cand_d, cand_i, res_d, res_i,
):
    """Beam search at one layer. Returns result heap size (max-heap in res_*)."""
    d0 = _d2(X, ep, q)
    visited[ep] = stamp
    csize = _heap_push_min(cand_d, cand_i, 0, d0, ep)
    rsize = _heap_push_max(res_d, res_i, 0, d0, ep)
    while csize > 0:
        cd = cand_d[0]
        ci = cand_i[0]
        if rsize >= ef and _lt(res_d[0], res_i[0], cd, ci):
            break
        csize = _heap_pop_min(cand_d, cand_i, csize)
        base, _ = _slot(offsets, M, M0, ci, layer)
        for t in range(counts[ci, layer]):
            e = adj[base + t]
            if visited[e] == stamp:
                continue
            visited[e] = stamp
            de = _d2(X, e, q)
            if rsize < ef or _lt(de, e, res_d[0], res_i[0]):
                csize = _heap_push_min(cand_d, cand_i, csize, de, e)
                rsize = _heap_push_max(res_d, res_i, rsize, de, e)
                if rsize > ef:
                    rsize = _heap_pop_max(res_d, res_i, rsize)
    return rsize


@njit(cache=True)
def _select_heuristic(X, cand_d, cand_i, n_cand, m_target, sel, rej):
    """Diversity-pruned selection over candidates sorted by (dist, id).

    A candidate is kept only if it is at least as close to the base point
    as to every already-kept neighbor, which spreads links across
    directions instead of bunching them in the densest region.  When the
    diversity pass keeps fewer than m_target, the nearest rejected
    candidates fill the remaining slots so lists stay at full width.
    """
    n_sel = 0
    n_rej = 0
    for idx in range(n_cand):
        if n_sel >= m_target:
            break
        c = cand_i[idx]
        dc = cand_d[idx]
        ok = True
        for s in range(n_sel):
            ds = _d2(X, c, X[sel[s]])
            if ds < dc:
                ok = False
                break
        if ok:
            sel[n_sel] = c
            n_sel += 1
        else:
            rej[n_rej] = c
            n_rej += 1
    r = 0
    while n_sel < m_target and r < n_rej:
        sel[n_sel] = rej[r]
        n_sel += 1
        r += 1
    return n_sel


@njit(cache=True)
def _sort_by_dist(ds, ids, n):
    # insertion sort by (dist, id); arrays are tiny (<= M0 + 1 entries)
    for i in range(1, n):
        d = ds[i]
        v = ids[i]
        j = i - 1
        while j >= 0 and _lt(d, v, ds[j], ids[j]):
            ds[j + 1] = ds[j]
            ids[j + 1] = ids[j]
            j -= 1
        ds[j + 1] = d
        ids[j + 1] = v


@njit(cache=True)
def _link(X, adj, offsets, counts, M, M0, node, new, layer, tmp_d, tmp_i, sel, rej):
    """Append new to node's list at layer, re-pruning if over capacity."""
    base, cap = _slot(offsets, M, M0, node, layer)
    cnt = counts[node, layer]
    if cnt < cap:
        adj[base + cnt] = new
        counts[node, layer] = cnt + 1
        return
    for t in range(cnt):
        tmp_i[t] = adj[base + t]
        tmp_d[t] = _d2(X, adj[base + t], X[node])
    tmp_i[cnt] = new
    tmp_d[cnt] = _d2(X, new, X[node])
    _sort_by_dist(tmp_d, tmp_i, cnt + 1)
    n_sel = _select_heuristic(X, tmp_d, tmp_i, cnt + 1, cap, sel, rej)
    for t in range(n_sel):
        adj[base + t] = sel[t]
    counts[node, layer] = n_sel


@njit(cache=True)
def _build_graph(
    X, levels, offsets, adj, counts, M, M0, ef_c,
    visited, cand_d, cand_i, res_d, res_i, pool_d, pool_i,
    sel, sel2, tmp_d, tmp_i, rej, rej2,
):
    n = X.shape[0]
    entry = 0
    max_level = levels[0]
    stamp = 0
    for i in range(1, n):
        q = X[i]
        lvl = levels[i]
        ep = entry
        layer = max_level
        while layer > lvl:
            ep, _ = _greedy_descend(X, adj, offsets, counts, M, M0, q, ep, layer)
            layer -= 1
        top = lvl if lvl < max_level else max_level
        for layer in range(top, -1, -1):
            stamp += 1
            rsize = _search_layer(
                X, adj, offsets, counts, M, M0, q, ep, ef_c, layer,
                visited, stamp, cand_d, cand_i, res_d, res_i,
            )
            # drain the max-heap into ascending (dist, id) order
            n_cand = rsize
            sz = rsize
            while sz > 0:
                pool_d[sz - 1] = res_d[0]
                pool_i[sz - 1] = res_i[0]
                sz = _heap_pop_max(res_d, res_i, sz)
            m_target = M0 if layer == 0 else M
            n_sel = _select_heuristic(X, pool_d, pool_i, n_cand, m_target, sel, rej)
            base, _ = _slot(offsets, M, M0, i, layer)
            for t in range(n_sel):
                adj[base + t] = sel[t]
            counts[i, layer] = n_sel
            for t in range(n_sel):
                _link(
                    X, adj, offsets, counts, M, M0, sel[t], i, layer,
                    tmp_d, tmp_i, sel2, rej2,
                )
            ep = pool_i[0]
        if lvl > max_level:
            max_level = lvl
            entry = i
    return entry, max_level, stamp


@njit(cache=True)
def _query_graph(
    X, adj, offsets, counts, M, M0, entry, max_level, Q, k, ef,
    visited, stamp0, cand_d, cand_i, res_d, res_i, out_ids, out_d,
):
    stamp = stamp0
    for qi in range(Q.shape[0]):
        q = Q[qi]
        ep = entry
        for layer in range(max_level, 0, -1):
            ep, _ = _greedy_descend(X, adj, offsets, counts, M, M0, q, ep, layer)
        stamp += 1
        rsize = _search_layer(
            X, adj, offsets, counts, M, M0, q, ep, ef, 0,
            visited, stamp, cand_d, cand_i, res_d, res_i,
        )
        while rsize > k:
            rsize = _heap_pop_max(res_d, res_i, rsize)
        found = rsize
        sz = rsize
        while sz > 0:
            out_ids[qi, sz - 1] = res_i[0]
            out_d[qi, sz - 1] = np.sqrt(res_d[0])
            sz = _heap_pop_max(res_d, res_i, sz)
        for t in range(found, k):
            out_ids[qi, t] = -1
            out_d[qi, t] = np.inf
    return stamp


class HnswIndex:
    """Hierarchical navigable small-world index over float64 vectors.

    Points keep their row ids. Build order, link pruning, and the level
    draws all depend only on the input matrix and the seed.
    """

    def __init__(
        self,
        M: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        seed: int = 0,
    ):
        if M < 2:
            raise NeighborError(f"M={M} must be >= 2")
        if ef_construction < 1:
            raise NeighborError(f"ef_construction={ef_construction} must be >= 1")
        self.M = int(M)
        self.M0 = 2 * int(M)
        self.ef_construction = int(ef_construction)
        self.seed = int(seed)
        self.X: np.ndarray | None = None

    @property
    def n(self) -> int:
        return 0 if self.X is None else self.X.shape[0]

    def build(self, X: np.ndarray) -> "HnswIndex":
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise NeighborError("index needs a non-empty 2d matrix")
        n = X.shape[0]
        self.X = X
        self._levels = np.empty(n, dtype=np.int32)
        _draw_levels(n, self.M, np.uint64(self.seed), self._levels)
        slots = self.M0 + self.M * self._levels.astype(np.int64)
        self._offsets = np.concatenate(([0], np.cumsum(slots)))[:-1]
        self._adj = np.full(int(slots.sum()), -1, dtype=np.int32)
        lmax = int(self._levels.max())
        self._counts = np.zeros((n, lmax + 1), dtype=np.int32)
        self._visited = np.zeros(n, dtype=np.int64)
        self._ensure_scratch(self.ef_construction)
        sel = np.empty(self.M0 + 2, dtype=np.int32)
        sel2 = np.empty(self.M0 + 2, dtype=np.int32)
        tmp_d = np.empty(self.M0 + 2, dtype=np.float64)
        tmp_i = np.empty(self.M0 + 2, dtype=np.int32)
        rej = np.empty(self.ef_construction + self.M0 + 4, dtype=np.int32)
        rej2 = np.empty(self.M0 + 2, dtype=np.int32)
        self._entry, self._max_level, self._stamp = _build_graph(
            X, self._levels, self._offsets, self._adj, self._counts,
            self.M, self.M0, self.ef_construction,
            self._visited, self._cand_d, self._cand_i,
            self._res_d, self._res_i, self._pool_d, self._pool_i,
            sel, sel2, tmp_d, tmp_i, rej, rej2,
        )
        return self

    def _ensure_scratch(self, ef: int) -> None:
        n = self.n
        cap = max(ef, 1) + 2
        if not hasattr(self, "_cand_d") or self._cand_d.shape[0] < n + 2:
            self._cand_d = np.empty(n + 2, dtype=np.float64)
            self._cand_i = np.empty(n + 2, dtype=np.int32)
        if not hasattr(self, "_res_d") or self._res_d.shape[0] < cap:
            self._res_d = np.empty(cap, dtype=np.float64)
            self._res_i = np.empty(cap, dtype=np.int32)
            self._pool_d = np.empty(cap, dtype=np.float64)
            self._pool_i = np.empty(cap, dtype=np.int32)

    def query(
        self, Q: np.ndarray, k: int = 10, ef: int = DEFAULT_EF
    ) -> tuple[np.ndarray, np.ndarray]:
        """k approximate nearest ids and true distances per query row.

        Rows with fewer than k reachable points pad with id -1 / dist inf.
        """
        if self.X is None:
            raise NeighborError("index is empty; call build first")
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        single = Q.ndim == 1
        if single:
            Q = Q[np.newaxis, :]
        if Q.shape[1] != self.X.shape[1]:
            raise NeighborError(
                f"query dim {Q.shape[1]} != index dim {self.X.shape[1]}"
            )
        if k < 1:
            raise NeighborError(f"k={k} must be >= 1")
        ef = max(int(ef), k)
        self._ensure_scratch(ef)
        ids = np.empty((Q.shape[0], k), dtype=np.int64)
        dists = np.empty((Q.shape[0], k), dtype=np.float64)
        self._stamp = _query_graph(
            self.X, self._adj, self._offsets, self._counts, self.M, self.M0,
            self._entry, self._max_level, Q, k, ef,
            self._visited, self._stamp, self._cand_d, self._cand_i,
            self._res_d, self._res_i, ids, dists,
        )
        if single:
            return ids[0], dists[0]
        return ids, dists


def knn_approx(
    X: np.ndarray,
    k: int = 10,
    M: int = DEFAULT_M,
    ef_construction: int = DEFAULT_EF_CONSTRUCTION,
    ef: int = DEFAULT_EF,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs approximate kNN of X against itself, self excluded."""
    n = X.shape[0]
    if k < 1 or k > n - 1:
        raise NeighborError(f"k={k} not in [1, {n - 1}]")
    index = HnswIndex(M=M, ef_construction=ef_construction, seed=seed).build(X)
    raw_ids, raw_d = index.query(X, k=k + 1, ef=max(ef, k + 1))
    ids = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        keep = raw_ids[i] != i
        ids[i] = raw_ids[i, keep][:k]
        dists[i] = raw_d[i, keep][:k]
    return ids, dists


def knn_typed(
    queries,
    targets,
    k: int = 10,
    approx: bool = False,
    index: HnswIndex | None = None,
    ef: int = DEFAULT_EF,
    seed: int = 0,
) -> NeighborLists:
    """kNN between two typed embeddings, self-excluded when types match.

    queries/targets are LatentEmbedding values (entity_type + matrix). k is
    clamped to the available target count so small corpora still work.
    """
    same = queries.entity_type == targets.entity_type
    if same and queries.matrix.shape != targets.matrix.shape:
        raise NeighborError("same-type kNN requires queries == targets")
    avail = targets.n - 1 if same else targets.n
    if k < 1:
        raise NeighborError(f"k={k} must be >= 1")
    k_eff = min(k, avail)
    if k_eff < 1:
        raise NeighborError(f"no {targets.entity_type} targets available")
    if not approx:
        ids, dists = knn_exact(
            targets.matrix,
            None if same else queries.matrix,
            k=k_eff,
            exclude_self=same,
        )
    elif same:
        ids, dists = knn_approx(targets.matrix, k=k_eff, ef=ef, seed=seed)
    else:
        if index is None:
            index = HnswIndex(seed=seed).build(targets.matrix)
        ids, dists = index.query(queries.matrix, k=k_eff, ef=ef)
    return NeighborLists(queries.entity_type, targets.entity_type, k_eff, ids, dists)


def recall_at_k(approx_ids: np.ndarray, exact_ids: np.ndarray) -> float:
    """Mean fraction of true neighbors recovered per row."""
    if approx_ids.shape != exact_ids.shape:
        raise NeighborError("id matrices must have matching shapes")
    hits = 0
    for a_row, e_row in zip(approx_ids, exact_ids):
        hits += len(set(a_row.tolist()) & set(e_row.tolist()))
    return hits / exact_ids.size
