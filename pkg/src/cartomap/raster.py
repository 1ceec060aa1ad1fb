"""Density rasters: histograms, Gaussian blur, tone mapping, tile pyramids.

Tiles are 256x256 8-bit grey images addressed (z, x, y) with y growing
downward; zoom level z covers the unit square with 2^z x 2^z tiles. Subset
tiles are rendered with an apron of blur-radius pixels so that a tile equals
the crop of the full-resolution image exactly, including across seams.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

TILE_SIZE = 256
DEFAULT_SIGMA = 1.5
P999_MIN_SAMPLE = 1000


class RasterError(Exception):
    pass


def histogram2d(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Count grid over [0,1]^2 with half-open bins; 1.0 clamps into the last.

    Row index is floor(y*height): y increases downward like tile rows.
    """
    if width < 1 or height < 1:
        raise RasterError(f"grid dimensions {width}x{height} must be >= 1")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.shape[0]:
        bad = ~(
            np.isfinite(points).all(axis=1)
            & (points >= 0.0).all(axis=1)
            & (points <= 1.0).all(axis=1)
        )
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise RasterError(
                f"point {i} at ({points[i, 0]}, {points[i, 1]}) is outside the unit square"
            )
    cols = np.minimum((points[:, 0] * width).astype(np.int64), width - 1)
    rows = np.minimum((points[:, 1] * height).astype(np.int64), height - 1)
    counts = np.bincount(rows * width + cols, minlength=width * height)
    return counts.reshape(height, width).astype(np.float64)


def _kernel(sigma: float) -> tuple[np.ndarray, int]:
    radius = int(np.floor(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum(), radius


def _axis_mass(full_n: int, start: int, length: int, g: np.ndarray, radius: int) -> np.ndarray:
    """In-bounds kernel mass for sources at absolute positions start..start+length-1."""
    p = np.arange(start, start + length, dtype=np.int64)
    csum = np.concatenate(([0.0], np.cumsum(g)))
    lo = np.maximum(-radius, -p)
    hi = np.minimum(radius, full_n - 1 - p)
    return csum[hi + radius + 1] - csum[lo + radius]


def blur(
    grid: np.ndarray,
    sigma: float = DEFAULT_SIGMA,
    origin: tuple[int, int] = (0, 0),
    full_shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Separable Gaussian blur truncated at 3 sigma, mass-preserving at edges.

    Each source cell spreads its mass with the kernel renormalized by the
    in-bounds kernel mass at that cell, so the grid total is conserved
    exactly. For a sub-grid of a larger image, pass the sub-grid's origin
    (row, col) and the full image shape: edge renormalization then follows
    the full image's bounds, which makes crops of full-image blurs and
    blurs of padded sub-grids agree exactly.
    """
    if sigma < 0:
        raise RasterError(f"sigma={sigma} must be >= 0")
    grid = np.asarray(grid, dtype=np.float64)
    if sigma == 0:
        return grid.copy()
    full_h, full_w = full_shape if full_shape is not None else grid.shape
    g, radius = _kernel(sigma)
    if radius == 0:
        return grid.copy()
    mass_r = _axis_mass(full_h, origin[0], grid.shape[0], g, radius)
    mass_c = _axis_mass(full_w, origin[1], grid.shape[1], g, radius)
    x = grid / np.outer(mass_r, mass_c)
    out = convolve1d(x, g, axis=0, mode="constant", cval=0.0)
    return convolve1d(out, g, axis=1, mode="constant", cval=0.0)


def density_scale(grid: np.ndarray) -> float:
    """Tone-map scale: 99.9th percentile of nonzero values (max if few)."""
    nz = grid[grid > 0]
    if nz.size == 0:
        return 0.0
    if nz.size < P999_MIN_SAMPLE:
        return float(nz.max())
    return float(np.percentile(nz, 99.9))


def tonemap(grid: np.ndarray, scale: float | None = None) -> np.ndarray:
    """8-bit grey: v -> round(255 * log1p(v) / log1p(scale)), clamped.

    scale defaults to density_scale(grid); an all-zero grid stays all-zero.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if scale is None:
        scale = density_scale(grid)
    if scale <= 0.0:
        return np.zeros(grid.shape, dtype=np.uint8)
    v = 255.0 * np.log1p(grid) / np.log1p(scale)
    return np.clip(np.rint(v), 0, 255).astype(np.uint8)


@dataclass
class TilePyramid:
    layer: str
    zmax: int
    sigma: float
    tiles: dict[tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    scales: dict[int, float] = field(default_factory=dict)

    def tile(self, z: int, x: int, y: int) -> np.ndarray:
        return self.tiles[(z, x, y)]


def build_pyramid(
    points: np.ndarray,
    zmax: int,
    sigma: float = DEFAULT_SIGMA,
    layer: str = "default",
) -> TilePyramid:
    """Histogram, blur, and tone-map the whole map at each zoom level,
    then cut the level image into 256x256 tiles."""
    if zmax < 0:
        raise RasterError(f"zmax={zmax} must be >= 0")
    pyramid = TilePyramid(layer=layer, zmax=zmax, sigma=sigma)
    for z in range(zmax + 1):
        size = TILE_SIZE << z
        grid = blur(histogram2d(points, size, size), sigma)
        scale = density_scale(grid)
        pyramid.scales[z] = scale
        img = tonemap(grid, scale)
        for ty in range(1 << z):
            for tx in range(1 << z):
                pyramid.tiles[(z, tx, ty)] = np.ascontiguousarray(
                    img[ty * TILE_SIZE : (ty + 1) * TILE_SIZE, tx * TILE_SIZE : (tx + 1) * TILE_SIZE]
                )
    return pyramid


def _subset_points(coords: np.ndarray, ids) -> np.ndarray:
    if hasattr(ids, "to_array"):
        idx = ids.to_array()
    else:
        idx = np.asarray(ids, dtype=np.int64)
    if idx.size == 0:
        return np.empty((0, 2), dtype=np.float64)
    return coords[idx]


def subset_scale(
    coords: np.ndarray, ids, z: int, sigma: float = DEFAULT_SIGMA
) -> float:
    """Shared tone-map scale for one (subset, zoom): computed from the
    subset's full blurred image so every tile of the level agrees."""
    pts = _subset_points(coords, ids)
    if pts.shape[0] == 0:
        return 0.0
    size = TILE_SIZE << z
    return density_scale(blur(histogram2d(pts, size, size), sigma))


def render_tile_subset(
    coords: np.ndarray,
    ids,
    z: int,
    x: int,
    y: int,
    sigma: float = DEFAULT_SIGMA,
    scale: float | None = None,
) -> np.ndarray:
    """Density tile for an arbitrary id subset.

    Histograms only the tile rectangle plus a blur-radius apron, blurs with
    map-bounds renormalization, crops, and tone-maps. With the level's
    shared scale (see subset_scale) the result equals the corresponding
    crop of a full-subset image exactly.
    """
    if z < 0:
        raise RasterError(f"invalid tile address z={z} x={x} y={y}")
    n_side = 1 << z
    if not (0 <= x < n_side) or not (0 <= y < n_side):
        raise RasterError(f"invalid tile address z={z} x={x} y={y}")
    pts = _subset_points(coords, ids)
    if pts.shape[0] == 0:
        return np.zeros((TILE_SIZE, TILE_SIZE), dtype=np.uint8)
    size = TILE_SIZE << z
    _, radius = _kernel(sigma) if sigma > 0 else (None, 0)
    row0 = max(0, y * TILE_SIZE - radius)
    row1 = min(size, (y + 1) * TILE_SIZE + radius)
    col0 = max(0, x * TILE_SIZE - radius)
    col1 = min(size, (x + 1) * TILE_SIZE + radius)

    px_col = np.minimum((pts[:, 0] * size).astype(np.int64), size - 1)
    px_row = np.minimum((pts[:, 1] * size).astype(np.int64), size - 1)
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        bad = int(np.flatnonzero(((pts < 0.0) | (pts > 1.0)).any(axis=1))[0])
        raise RasterError(f"subset point {bad} is outside the unit square")
    keep = (px_row >= row0) & (px_row < row1) & (px_col >= col0) & (px_col < col1)
    h = row1 - row0
    w = col1 - col0
    counts = np.bincount(
        (px_row[keep] - row0) * w + (px_col[keep] - col0), minlength=h * w
    ).reshape(h, w).astype(np.float64)
    blurred = blur(counts, sigma, origin=(row0, col0), full_shape=(size, size))
    r_off = y * TILE_SIZE - row0
    c_off = x * TILE_SIZE - col0
    tile = blurred[r_off : r_off + TILE_SIZE, c_off : c_off + TILE_SIZE]
    if scale is None:
        scale = subset_scale(coords, ids, z, sigma)
    return tonemap(tile, scale)


def png_bytes(tile: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(tile, dtype=np.uint8), mode="L").save(
        buf, format="PNG", optimize=False
    )
    return buf.getvalue()


def png_to_array(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def tile_path(root: str | Path, layer: str, z: int, x: int, y: int) -> Path:
    return Path(root) / "layers" / layer / str(z) / str(x) / f"{y}.png"


def write_pyramid(pyramid: TilePyramid, root: str | Path) -> None:
    """Store every tile under layers/<layer>/<z>/<x>/<y>.png."""
    for (z, x, y), tile in sorted(pyramid.tiles.items()):
        path = tile_path(root, pyramid.layer, z, x, y)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(png_bytes(tile))
