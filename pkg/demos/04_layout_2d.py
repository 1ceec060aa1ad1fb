"""Neighbor-graph 2D layout: blobs stay blobs, and a 20% fit can place the rest.

Prints an ASCII sketch of the layout so no plotting backend is needed.
"""

import numpy as np

from cartomap.neighbors import knn_exact
from cartomap.project2d import (
    fit_layout,
    fuzzy_graph,
    layout_init,
    normalize_coords,
    transform,
)

rng = np.random.default_rng(2)
centers = rng.normal(0, 8, size=(4, 16))
X = np.repeat(centers, 150, axis=0) + rng.normal(0, 1, size=(600, 16))
blob = np.repeat(np.arange(4), 150)

ids, dists = knn_exact(X, k=15, exclude_self=True)
proj = fit_layout(fuzzy_graph(ids, dists), layout_init(X), epochs=150, seed=0)
coords = normalize_coords(proj.coords)

grid = [[" "] * 48 for _ in range(16)]
for (px, py), b in zip(coords, blob):
    grid[min(15, int(py * 16))][min(47, int(px * 48))] = "abcd"[b]
print("\n".join("".join(row) for row in grid))

# fit a sample, place the held-out points by their neighbors among the sample
subset = rng.choice(600, size=120, replace=False)
rest = np.setdiff1d(np.arange(600), subset)
ids_s, dists_s = knn_exact(X[subset], k=10, exclude_self=True)
proj_s = fit_layout(fuzzy_graph(ids_s, dists_s), layout_init(X[subset]), epochs=150, seed=0)
ids_r, dists_r = knn_exact(X[subset], X[rest], k=5)
placed = transform(proj_s, ids_r, dists_r, seed=0)

cents = np.stack([proj_s.coords[blob[subset] == b].mean(axis=0) for b in range(4)])
d2 = ((placed[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
ok = float((d2.argmin(axis=1) == blob[rest]).mean())
print(f"\nheld-out points landing nearest their own blob: {ok:.1%}")
