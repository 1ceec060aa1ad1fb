"""2D map layout: fuzzy neighbor graph, SGD embedding, out-of-sample transform.

The layout preserves close neighborhoods: each point's kNN distances become
membership weights through a locally adaptive kernel, the symmetrized weighted
graph is embedded by stochastic gradient descent with negative sampling, and
points not used for fitting are placed afterwards from their neighbors among
the fitted points. Everything is seeded and single-threaded, so identical
inputs give identical maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.optimize import curve_fit

from .neighbors import _mix64

SMOOTH_TOL = 1e-5
NEG_PER_POS = 5
GRAD_CLIP = 4.0
DEFAULT_EPOCHS = 200
DEFAULT_MIN_DIST = 0.1
DEFAULT_SPREAD = 1.0
MARGIN = 0.02


class ProjectionError(Exception):
    pass


@dataclass
class FuzzyGraph:
    n: int
    heads: np.ndarray  # directed edge sources (both orientations present)
    tails: np.ndarray
    weights: np.ndarray  # in (0, 1]
    rho: np.ndarray  # per-node distance to nearest neighbor
    sigma: np.ndarray  # per-node bandwidth
    merge: np.ndarray  # representative node per zero-distance duplicate group


@dataclass
class Projection2D:
    coords: np.ndarray  # n x 2
    fitted_ids: np.ndarray | None
    epochs: int
    seed: int


@njit(cache=True)
def _solve_sigmas(dists, counts, rho, sigma):
    n, _ = dists.shape
    for i in range(n):
        c = counts[i]
        r = rho[i]
        all_equal = True
        for j in range(c):
            if dists[i, j] != r:
                all_equal = False
                break
        if all_equal:
            # the smoothing sum is constant in sigma here; any value works
            sigma[i] = 1.0
            continue
        target = np.log2(c)
        hi = 1.0
        for _ in range(64):
            s = 0.0
            for j in range(c):
                diff = dists[i, j] - r
                if diff <= 0.0:
                    s += 1.0
                else:
                    s += np.exp(-diff / hi)
            if s >= target:
                break
            hi *= 2.0
        lo = 0.0
        mid = hi
        for _ in range(128):
            mid = 0.5 * (lo + hi)
            if mid <= 1e-300:
                break
            s = 0.0
            for j in range(c):
                diff = dists[i, j] - r
                if diff <= 0.0:
                    s += 1.0
                else:
                    s += np.exp(-diff / mid)
            if abs(s - target) <= SMOOTH_TOL:
                break
            if s > target:
                hi = mid
            else:
                lo = mid
        sigma[i] = max(mid, 1e-12)


def _directed_weights(ids: np.ndarray, dists: np.ndarray):
    """Membership weights exp(-max(0, d - rho)/sigma) per kNN row.

    Rows use only valid entries (id >= 0). Returns (rows, cols, weights,
    rho, sigma) in row-major edge order.
    """
    n, k = ids.shape
    if k < 2:
        raise ProjectionError(f"neighbor lists need k >= 2, got k={k}")
    valid = ids >= 0
    counts = valid.sum(axis=1).astype(np.int64)
    if np.any(counts == 0):
        bad = int(np.argmin(counts))
        raise ProjectionError(f"node {bad} has zero neighbors")
    d = np.where(valid, dists, np.inf)
    rho = d.min(axis=1)
    sigma = np.empty(n, dtype=np.float64)
    # valid entries are sorted first in each row already (ids come from kNN)
    _solve_sigmas(np.ascontiguousarray(dists, dtype=np.float64), counts, rho, sigma)
    w = np.exp(-np.maximum(0.0, dists - rho[:, np.newaxis]) / sigma[:, np.newaxis])
    rows = np.repeat(np.arange(n, dtype=np.int64), k)[valid.ravel()]
    cols = ids[valid].astype(np.int64)
    weights = w[valid]
    return rows, cols, weights, rho, sigma


def _zero_distance_merge(ids: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """Union-find over exact-duplicate pairs; representative = lowest id.

    Points at latent distance zero carry identical information, and edge
    sampling noise would otherwise scatter them, so the layout treats each
    duplicate group as a single node.
    """
    n = ids.shape[0]
    merge = np.arange(n, dtype=np.int64)
    zh, zt = np.nonzero((ids >= 0) & (dists == 0.0))
    if zh.shape[0] == 0:
        return merge

    def find(i):
        while merge[i] != i:
            merge[i] = merge[merge[i]]
            i = merge[i]
        return i

    for u, v in zip(zh, ids[zh, zt]):
        ru, rv = find(u), find(int(v))
        if ru != rv:
            if rv < ru:
                ru, rv = rv, ru
            merge[rv] = ru
    for i in range(n):
        merge[i] = find(i)
    return merge


def fuzzy_graph(ids: np.ndarray, dists: np.ndarray) -> FuzzyGraph:
    """Symmetrized fuzzy neighbor graph from same-set kNN lists.

    Directed weights a, b between a pair combine as a + b - a*b, the
    probabilistic union, so one strong direction is enough for a strong tie.
    Zero-distance duplicates collapse onto one representative node; their
    parallel edges combine with the same union rule.
    """
    n = ids.shape[0]
    rows, cols, weights, rho, sigma = _directed_weights(ids, dists)
    merge = _zero_distance_merge(ids, dists)
    rows = merge[rows]
    cols = merge[cols]
    keep = rows != cols
    if np.any(merge != np.arange(n)):
        # parallel copies combine as 1 - prod(1 - w); csr conversion sums
        # duplicate entries, so feed it the log terms
        with np.errstate(divide="ignore"):
            lg = np.log1p(-weights[keep])
        A = sp.coo_matrix((lg, (rows[keep], cols[keep])), shape=(n, n)).tocsr()
        A.data = 1.0 - np.exp(A.data)
    else:
        A = sp.coo_matrix(
            (weights[keep], (rows[keep], cols[keep])), shape=(n, n)
        ).tocsr()
    W = A + A.T - A.multiply(A.T)
    W = W.tocoo()
    mask = W.data > 0.0
    return FuzzyGraph(
        n=n,
        heads=W.row[mask].astype(np.int64),
        tails=W.col[mask].astype(np.int64),
        weights=W.data[mask],
        rho=rho,
        sigma=sigma,
        merge=merge,
    )


@lru_cache(maxsize=8)
def fit_kernel_params(
    min_dist: float = DEFAULT_MIN_DIST, spread: float = DEFAULT_SPREAD
) -> tuple[float, float]:
    """Fit (a, b) of the low-dimensional kernel 1/(1 + a r^(2b)).

    Least squares against the target curve which is 1 inside min_dist and
    decays as exp(-(r - min_dist)/spread) beyond it.
    """
    xs = np.linspace(0.0, 3.0 * spread, 300)
    ys = np.where(xs < min_dist, 1.0, np.exp(-(xs - min_dist) / spread))
    (a, b), _ = curve_fit(lambda x, a, b: 1.0 / (1.0 + a * x ** (2.0 * b)), xs, ys)
    return float(a), float(b)


@njit(cache=True)
def _sgd(
    pos_head,
    pos_tail,
    heads,
    tails,
    eps,
    n_epochs,
    alpha0,
    a,
    b,
    seed,
    move_tail,
    same_set,
    merge,
):
    """Edge-sampled layout SGD.

    Edges fire on the epochs-per-sample schedule (weight-proportional
    frequency); each positive sample is followed by NEG_PER_POS uniform
    repulsions of the head against the tail point set. Negative draws map
    through merge so duplicate groups repel from their live representative.
    Per-coordinate gradients clip at +-GRAD_CLIP; the step size decays
    linearly to 0.
    """
    state = np.uint64(seed)
    n_tail = pos_tail.shape[0]
    next_sample = eps.copy()
    for epoch in range(n_epochs):
        alpha = alpha0 * (1.0 - epoch / n_epochs)
        for e in range(heads.shape[0]):
            if next_sample[e] > epoch:
                continue
            next_sample[e] += eps[e]
            i = heads[e]
            j = tails[e]
            dx = pos_head[i, 0] - pos_tail[j, 0]
            dy = pos_head[i, 1] - pos_tail[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                gc = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2**b)
                gx = gc * dx
                gy = gc * dy
                if gx > GRAD_CLIP:
                    gx = GRAD_CLIP
                elif gx < -GRAD_CLIP:
                    gx = -GRAD_CLIP
                if gy > GRAD_CLIP:
                    gy = GRAD_CLIP
                elif gy < -GRAD_CLIP:
                    gy = -GRAD_CLIP
                pos_head[i, 0] += alpha * gx
                pos_head[i, 1] += alpha * gy
                if move_tail:
                    pos_tail[j, 0] -= alpha * gx
                    pos_tail[j, 1] -= alpha * gy
            for _ in range(NEG_PER_POS):
                state, z = _mix64(state)
                l = merge[int(z % np.uint64(n_tail))]
                if same_set and l == i:
                    continue
                dx = pos_head[i, 0] - pos_tail[l, 0]
                dy = pos_head[i, 1] - pos_tail[l, 1]
                d2 = dx * dx + dy * dy
                if d2 > 0.0:
                    gc = 2.0 * b / ((0.001 + d2) * (1.0 + a * d2**b))
                    gx = gc * dx
                    gy = gc * dy
                    if gx > GRAD_CLIP:
                        gx = GRAD_CLIP
                    elif gx < -GRAD_CLIP:
                        gx = -GRAD_CLIP
                    if gy > GRAD_CLIP:
                        gy = GRAD_CLIP
                    elif gy < -GRAD_CLIP:
                        gy = -GRAD_CLIP
                else:
                    # coincident points repel at full clip to break the tie
                    gx = GRAD_CLIP
                    gy = GRAD_CLIP
                pos_head[i, 0] += alpha * gx
                pos_head[i, 1] += alpha * gy
    ok = True
    for i in range(pos_head.shape[0]):
        if not (np.isfinite(pos_head[i, 0]) and np.isfinite(pos_head[i, 1])):
            ok = False
    return ok


def layout_init(latent: np.ndarray) -> np.ndarray:
    """Deterministic seed positions: first two latent components at unit variance."""
    latent = np.asarray(latent, dtype=np.float64)
    n = latent.shape[0]
    init = np.zeros((n, 2), dtype=np.float64)
    take = min(2, latent.shape[1])
    init[:, :take] = latent[:, :take]
    for axis in range(2):
        std = init[:, axis].std()
        if std > 0:
            init[:, axis] /= std
    return init


def fit_layout(
    graph: FuzzyGraph,
    init: np.ndarray,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    min_dist: float = DEFAULT_MIN_DIST,
    spread: float = DEFAULT_SPREAD,
    learning_rate: float = 1.0,
) -> Projection2D:
    if epochs < 1:
        raise ProjectionError(f"epochs={epochs} must be >= 1")
    init = np.array(init, dtype=np.float64)
    if init.shape != (graph.n, 2):
        raise ProjectionError(f"init shape {init.shape} != ({graph.n}, 2)")
    if not np.all(np.isfinite(init)):
        raise ProjectionError("init contains non-finite positions")
    pos = np.ascontiguousarray(init)
    if graph.heads.shape[0] > 0:
        a, b = fit_kernel_params(min_dist, spread)
        eps = graph.weights.max() / graph.weights
        ok = _sgd(
            pos, pos, graph.heads, graph.tails, eps, epochs,
            learning_rate, a, b, np.uint64(seed), True, True, graph.merge,
        )
        if not ok:
            raise ProjectionError("layout diverged to non-finite positions")
    # duplicate groups land exactly on their representative
    pos = pos[graph.merge]
    return Projection2D(coords=pos, fitted_ids=None, epochs=epochs, seed=seed)


def transform(
    fitted: Projection2D,
    ids: np.ndarray,
    dists: np.ndarray,
    refine_epochs: int = 30,
    seed: int = 0,
    min_dist: float = DEFAULT_MIN_DIST,
    spread: float = DEFAULT_SPREAD,
    learning_rate: float = 1.0,
) -> np.ndarray:
    """Place new points from their kNN among the fitted points.

    Start at the membership-weighted average of the neighbors' positions
    (a zero-distance neighbor wins outright), then refine_epochs of SGD
    moving only the new points.
    """
    rows, cols, weights, _, _ = _directed_weights(ids, dists)
    n_new = ids.shape[0]
    sums = np.zeros((n_new, 2), dtype=np.float64)
    norm = np.zeros(n_new, dtype=np.float64)
    np.add.at(sums, rows, weights[:, np.newaxis] * fitted.coords[cols])
    np.add.at(norm, rows, weights)
    pos = sums / norm[:, np.newaxis]
    exact = dists[:, 0] == 0.0
    if np.any(exact):
        pos[exact] = fitted.coords[ids[exact, 0]]
    if refine_epochs > 0:
        a, b = fit_kernel_params(min_dist, spread)
        eps = weights.max() / weights
        pos = np.ascontiguousarray(pos)
        identity = np.arange(fitted.coords.shape[0], dtype=np.int64)
        ok = _sgd(
            pos, fitted.coords, rows, cols, eps, refine_epochs,
            learning_rate, a, b, np.uint64(seed), False, False, identity,
        )
        if not ok:
            raise ProjectionError("refinement diverged to non-finite positions")
    return pos


def normalize_coords(coords: np.ndarray, margin: float = MARGIN) -> np.ndarray:
    """Affine map of the bounding box into [0,1]^2 with a margin.

    One scale for both axes (aspect preserved); the short axis is centered.
    A degenerate box (single point, identical coordinates) lands at 0.5.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] < 1:
        raise ProjectionError("need at least one point")
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = hi - lo
    avail = 1.0 - 2.0 * margin
    biggest = span.max()
    out = np.empty_like(coords)
    if biggest == 0.0:
        out[:] = 0.5
        return out
    scale = avail / biggest
    pad = margin + (avail - span * scale) / 2.0
    out[:] = pad[np.newaxis, :] + (coords - lo[np.newaxis, :]) * scale
    return out
