import numpy as np
import pytest

from cartomap.idset import IdSet
from cartomap.raster import (
    TILE_SIZE,
    RasterError,
    TilePyramid,
    blur,
    build_pyramid,
    density_scale,
    histogram2d,
    png_bytes,
    png_to_array,
    render_tile_subset,
    subset_scale,
    tile_path,
    tonemap,
    write_pyramid,
)


def cluster_points(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.25, 0.3], [0.7, 0.65], [0.4, 0.8]])
    pts = centers[rng.integers(0, 3, size=n)] + rng.normal(0, 0.06, size=(n, 2))
    return np.clip(pts, 0.0, 1.0)


class TestHistogram2d:
    def test_center_point_lands_in_lower_right_bin(self):
        grid = histogram2d(np.array([[0.5, 0.5]]), 2, 2)
        assert grid[1, 1] == 1
        assert grid.sum() == 1

    def test_sum_equals_point_count(self):
        pts = np.random.default_rng(1).random((777, 2))
        assert histogram2d(pts, 13, 7).sum() == 777

    def test_uniform_points_fill_bins_evenly(self):
        n = 10_000
        pts = np.random.default_rng(2).random((n, 2))
        grid = histogram2d(pts, 16, 16)
        p = 1 / 256
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(grid - n * p) <= 5 * sigma)

    def test_one_point_zero_clamps_into_last_bin(self):
        grid = histogram2d(np.array([[1.0, 1.0]]), 4, 4)
        assert grid[3, 3] == 1

    def test_row_is_y_growing_downward(self):
        grid = histogram2d(np.array([[0.2, 0.9]]), 4, 4)
        assert grid[3, 0] == 1

    def test_rectangular_grid_shape(self):
        grid = histogram2d(np.empty((0, 2)), 5, 3)
        assert grid.shape == (3, 5)

    def test_point_outside_unit_square_named(self):
        pts = np.array([[0.5, 0.5], [1.5, 0.2]])
        with pytest.raises(RasterError, match="point 1"):
            histogram2d(pts, 4, 4)

    def test_nan_point_rejected(self):
        with pytest.raises(RasterError, match="point 0"):
            histogram2d(np.array([[np.nan, 0.5]]), 4, 4)

    def test_degenerate_grid_rejected(self):
        with pytest.raises(RasterError, match="must be >= 1"):
            histogram2d(np.empty((0, 2)), 0, 4)


class TestBlur:
    def test_sigma_zero_is_identity(self):
        grid = np.random.default_rng(3).random((20, 20))
        out = blur(grid, sigma=0)
        assert np.array_equal(out, grid)
        assert out is not grid

    def test_mass_preserved_with_edge_mass(self):
        rng = np.random.default_rng(4)
        grid = rng.random((30, 40))
        grid[0, :] += 5.0
        grid[:, -1] += 3.0
        out = blur(grid, sigma=2.5)
        assert out.sum() == pytest.approx(grid.sum(), rel=1e-6)

    def test_interior_impulse_matches_kernel_product(self):
        sigma = 1.5
        radius = int(np.floor(3 * sigma))
        t = np.arange(-radius, radius + 1, dtype=np.float64)
        g = np.exp(-0.5 * (t / sigma) ** 2)
        g /= g.sum()
        grid = np.zeros((21, 21))
        grid[10, 10] = 1.0
        out = blur(grid, sigma=sigma)
        want = np.zeros_like(grid)
        want[10 - radius : 10 + radius + 1, 10 - radius : 10 + radius + 1] = np.outer(g, g)
        assert np.allclose(out, want, atol=1e-6)

    def test_impulse_profile_symmetric(self):
        grid = np.zeros((15, 15))
        grid[7, 7] = 2.0
        out = blur(grid, sigma=1.5)
        assert np.allclose(out, out[::-1, :])
        assert np.allclose(out, out[:, ::-1])
        assert np.allclose(out, out.T)

    def test_corner_impulse_mass_preserved(self):
        grid = np.zeros((10, 10))
        grid[0, 0] = 1.0
        assert blur(grid, sigma=2.0).sum() == pytest.approx(1.0, rel=1e-9)

    def test_subgrid_with_origin_matches_full_blur_crop(self):
        rng = np.random.default_rng(5)
        full = rng.random((64, 64))
        sigma = 1.5
        radius = int(np.floor(3 * sigma))
        whole = blur(full, sigma)
        r0, c0 = 20, 28
        padded = full[r0 - radius : r0 + 16 + radius, c0 - radius : c0 + 16 + radius]
        part = blur(padded, sigma, origin=(r0 - radius, c0 - radius), full_shape=(64, 64))
        crop = part[radius : radius + 16, radius : radius + 16]
        assert np.allclose(crop, whole[r0 : r0 + 16, c0 : c0 + 16], atol=1e-12)

    def test_negative_sigma_rejected(self):
        with pytest.raises(RasterError, match="sigma"):
            blur(np.zeros((4, 4)), sigma=-1.0)


class TestTonemap:
    def test_all_zero_stays_zero(self):
        out = tonemap(np.zeros((8, 8)))
        assert out.dtype == np.uint8
        assert not out.any()

    def test_max_cell_hits_255_with_few_nonzeros(self):
        grid = np.array([[0.0, 1.0], [3.0, 9.0]])
        out = tonemap(grid)
        assert out[1, 1] == 255
        assert out[0, 0] == 0

    def test_percentile_cell_hits_255_with_many_nonzeros(self):
        rng = np.random.default_rng(6)
        grid = rng.random(5000) * 100 + 1
        scale = density_scale(grid)
        assert scale == pytest.approx(np.percentile(grid, 99.9))
        out = tonemap(grid, scale)
        at_scale = tonemap(np.array([scale]), scale)
        assert at_scale[0] == 255
        assert out[grid >= scale].min() == 255

    def test_monotone(self):
        rng = np.random.default_rng(7)
        v = np.sort(rng.random(2000) * 50)
        out = tonemap(v, scale=40.0)
        assert np.all(np.diff(out.astype(np.int32)) >= 0)

    def test_values_above_scale_clamp(self):
        out = tonemap(np.array([1000.0]), scale=10.0)
        assert out[0] == 255

    def test_density_scale_of_empty(self):
        assert density_scale(np.zeros((4, 4))) == 0.0


class TestBuildPyramid:
    def test_tile_counts_per_level(self):
        pts = cluster_points(500)
        assert len(build_pyramid(pts, zmax=0).tiles) == 1
        pyr = build_pyramid(pts, zmax=2)
        assert len(pyr.tiles) == 21
        for z in range(3):
            assert sum(1 for a in pyr.tiles if a[0] == z) == 4**z

    def test_tiles_are_256_uint8(self):
        pyr = build_pyramid(cluster_points(200), zmax=1)
        for tile in pyr.tiles.values():
            assert tile.shape == (TILE_SIZE, TILE_SIZE)
            assert tile.dtype == np.uint8

    def test_point_in_far_quadrant_lights_only_that_tile(self):
        pyr = build_pyramid(np.array([[0.9, 0.9]]), zmax=1)
        assert pyr.tile(1, 1, 1).any()
        for addr in [(1, 0, 0), (1, 1, 0), (1, 0, 1)]:
            assert not pyr.tile(*addr).any()

    def test_mass_constant_across_levels(self):
        pts = cluster_points(1500)
        n = pts.shape[0]
        for z in range(3):
            size = TILE_SIZE << z
            grid = blur(histogram2d(pts, size, size), 1.5)
            assert grid.sum() == pytest.approx(n, rel=1e-6)

    def test_deterministic_rebuild(self):
        a = build_pyramid(cluster_points(800), zmax=1, sigma=1.5)
        b = build_pyramid(cluster_points(800), zmax=1, sigma=1.5)
        assert a.scales == b.scales
        for addr in a.tiles:
            assert np.array_equal(a.tiles[addr], b.tiles[addr])

    def test_negative_zmax_rejected(self):
        with pytest.raises(RasterError, match="zmax"):
            build_pyramid(np.empty((0, 2)), zmax=-1)


class TestRenderTileSubset:
    def test_empty_ids_gives_zero_tile(self):
        coords = cluster_points(100)
        tile = render_tile_subset(coords, IdSet.empty(), 1, 0, 0)
        assert tile.shape == (TILE_SIZE, TILE_SIZE)
        assert not tile.any()

    def test_all_ids_match_static_pyramid_within_one_level(self):
        coords = cluster_points(3000, seed=8)
        pyr = build_pyramid(coords, zmax=2)
        ids = IdSet.full_range(coords.shape[0])
        for z in range(3):
            scale = subset_scale(coords, ids, z)
            assert scale == pytest.approx(pyr.scales[z], rel=1e-9)
            for x in range(1 << z):
                for y in range(1 << z):
                    got = render_tile_subset(coords, ids, z, x, y, scale=scale)
                    want = pyr.tile(z, x, y)
                    diff = np.abs(got.astype(np.int32) - want.astype(np.int32))
                    assert diff.max() <= 1

    def test_subset_tiles_equal_full_subset_image_crops(self):
        # crop oracle across every tile of a level, seams included
        coords = cluster_points(2500, seed=9)
        rng = np.random.default_rng(10)
        ids = IdSet.from_array(rng.choice(coords.shape[0], size=900, replace=False))
        z = 2
        size = TILE_SIZE << z
        pts = coords[ids.to_array()]
        full = tonemap(blur(histogram2d(pts, size, size), 1.5), subset_scale(coords, ids, z))
        scale = subset_scale(coords, ids, z)
        for x in range(1 << z):
            for y in range(1 << z):
                got = render_tile_subset(coords, ids, z, x, y, scale=scale)
                want = full[
                    y * TILE_SIZE : (y + 1) * TILE_SIZE, x * TILE_SIZE : (x + 1) * TILE_SIZE
                ]
                diff = np.abs(got.astype(np.int32) - want.astype(np.int32))
                assert diff.max() <= 1, (x, y)

    def test_single_point_blob_centered_on_its_pixel(self):
        coords = np.array([[0.3, 0.62], [0.9, 0.9]])
        tile = render_tile_subset(coords, IdSet.from_array([0]), 0, 0, 0)
        r, c = np.unravel_index(np.argmax(tile), tile.shape)
        assert r == int(0.62 * TILE_SIZE)
        assert c == int(0.3 * TILE_SIZE)

    def test_partition_histograms_add_exactly(self):
        coords = cluster_points(1000, seed=11)
        rng = np.random.default_rng(12)
        mask = rng.random(1000) < 0.4
        a = IdSet.from_array(np.flatnonzero(mask))
        b = IdSet.from_array(np.flatnonzero(~mask))
        both = a | b
        size = TILE_SIZE
        ha = histogram2d(coords[a.to_array()], size, size)
        hb = histogram2d(coords[b.to_array()], size, size)
        hu = histogram2d(coords[both.to_array()], size, size)
        assert np.array_equal(ha + hb, hu)

    def test_plain_index_arrays_accepted(self):
        coords = cluster_points(50)
        t1 = render_tile_subset(coords, IdSet.from_array([3, 7]), 0, 0, 0)
        t2 = render_tile_subset(coords, np.array([3, 7]), 0, 0, 0)
        assert np.array_equal(t1, t2)

    def test_default_scale_matches_explicit(self):
        coords = cluster_points(300, seed=13)
        ids = IdSet.from_array(np.arange(0, 300, 3))
        auto = render_tile_subset(coords, ids, 1, 0, 0)
        manual = render_tile_subset(coords, ids, 1, 0, 0, scale=subset_scale(coords, ids, 1))
        assert np.array_equal(auto, manual)

    def test_invalid_tile_address_rejected(self):
        coords = cluster_points(10)
        with pytest.raises(RasterError, match="tile address"):
            render_tile_subset(coords, IdSet.from_array([0]), 1, 2, 0)
        with pytest.raises(RasterError, match="tile address"):
            render_tile_subset(coords, IdSet.from_array([0]), -1, 0, 0)

    def test_subset_point_outside_unit_square_rejected(self):
        coords = np.array([[0.5, 0.5], [1.2, 0.5]])
        with pytest.raises(RasterError, match="outside"):
            render_tile_subset(coords, IdSet.from_array([1]), 0, 0, 0)


class TestPngIO:
    def test_round_trip_exact(self):
        tile = np.random.default_rng(14).integers(0, 256, (TILE_SIZE, TILE_SIZE)).astype(np.uint8)
        assert np.array_equal(png_to_array(png_bytes(tile)), tile)

    def test_bytes_deterministic(self):
        tile = build_pyramid(cluster_points(400), zmax=0).tile(0, 0, 0)
        assert png_bytes(tile) == png_bytes(tile.copy())

    def test_write_pyramid_layout(self, tmp_path):
        pyr = build_pyramid(cluster_points(300), zmax=1, layer="articles")
        write_pyramid(pyr, tmp_path)
        for (z, x, y), tile in pyr.tiles.items():
            path = tile_path(tmp_path, "articles", z, x, y)
            assert path == tmp_path / "layers" / "articles" / str(z) / str(x) / f"{y}.png"
            assert path.read_bytes() == png_bytes(tile)

    def test_rewrite_is_byte_identical(self, tmp_path):
        pyr = build_pyramid(cluster_points(300), zmax=1)
        write_pyramid(pyr, tmp_path / "a")
        write_pyramid(pyr, tmp_path / "b")
        for (z, x, y) in pyr.tiles:
            pa = tile_path(tmp_path / "a", "default", z, x, y)
            pb = tile_path(tmp_path / "b", "default", z, x, y)
            assert pa.read_bytes() == pb.read_bytes()
