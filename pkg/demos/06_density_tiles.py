"""Density tile pyramid: histogram, blur, log tone-map, and subset rendering.

Writes a small PNG pyramid under /tmp/cartomap-demo-tiles and renders one
tile twice: once from the full point set and once for a filtered subset.
"""

from pathlib import Path

import numpy as np

from cartomap.idset import IdSet
from cartomap.raster import (
    build_pyramid,
    png_bytes,
    render_tile_subset,
    subset_scale,
    write_pyramid,
)

rng = np.random.default_rng(4)
pts = np.clip(
    np.array([[0.25, 0.3], [0.7, 0.65]])[rng.integers(0, 2, 20000)]
    + rng.normal(0, 0.08, (20000, 2)),
    0,
    1,
)

pyramid = build_pyramid(pts, zmax=2)
out = Path("/tmp/cartomap-demo-tiles")
write_pyramid(pyramid, out / "layers" / "demo")
n_png = sum(1 for _ in (out / "layers" / "demo").rglob("*.png"))
print(f"wrote {n_png} tiles to {out}/layers/demo (zoom 0..2, 4^z per level)")

tile = pyramid.tiles[(1, 0, 0)]
print(f"tile (z=1, x=0, y=0): shape {tile.shape}, grey range {tile.min()}..{tile.max()}")

# render the same tile for the first blob only; the second blob vanishes
subset = IdSet.from_array(np.flatnonzero(pts[:, 0] < 0.5))
scale = subset_scale(pts, subset, z=1)
sub_tile = render_tile_subset(pts, subset, 1, 0, 0, scale=scale)
(out / "subset_z1_0_0.png").write_bytes(png_bytes(sub_tile))
print(
    f"subset of {len(subset)} points: tile mass {int(sub_tile.sum())} "
    f"vs full {int(tile.sum())}, saved to {out}/subset_z1_0_0.png"
)
