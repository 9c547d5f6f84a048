import numpy as np
import pytest

from glarify.data_model import TracePoint
from glarify.errors import DataError
from glarify.heatmaps import (
    GazeHeatmap,
    default_sigma,
    export_heatmap_png,
    patchify,
    read_heatmap_glhm,
    render_heatmap,
    unpatchify,
    write_heatmap_glhm,
)


def brute_force_heatmap(points, width, height, sigma):
    grid = np.zeros((height, width))
    for r in range(height):
        for c in range(width):
            total = 0.0
            for p in points:
                dx = c - p.x * width
                dy = r - p.y * height
                total += np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
            grid[r, c] = total
    peak = grid.max()
    return grid / peak if peak > 0 else grid


class TestRenderHeatmap:
    def test_zero_points_all_zero(self):
        hm = render_heatmap([], 8, 6, sigma=1.0, keyframe_index=2)
        assert hm.grid.shape == (6, 8)
        assert not hm.grid.any()
        assert hm.keyframe_index == 2

    def test_center_point_unique_max(self):
        hm = render_heatmap([TracePoint(0.5, 0.5, 0, 0)], 64, 64, sigma=3.0)
        grid = hm.grid
        assert grid[32, 32] == 1.0
        assert (grid == 1.0).sum() == 1
        for d in range(1, 32):
            assert grid[32 + d, 32] == pytest.approx(grid[32 - d, 32], rel=1e-12)
            assert grid[32, 32 + d] == pytest.approx(grid[32, 32 - d], rel=1e-12)

    def test_matches_double_loop_oracle(self):
        pts = [TracePoint(0.2, 0.3, 0, 0), TracePoint(0.7, 0.55, 0, 10)]
        out = render_heatmap(pts, 16, 16, sigma=2.5).grid
        ref = brute_force_heatmap(pts, 16, 16, 2.5)
        assert np.allclose(out, ref, rtol=1e-12, atol=0)

    def test_max_exactly_one_when_points_exist(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pts = [
                TracePoint(float(rng.uniform()), float(rng.uniform()), 0, i)
                for i in range(int(rng.integers(1, 6)))
            ]
            grid = render_heatmap(pts, 12, 10, sigma=1.7).grid
            assert grid.max() == 1.0
            assert grid.min() >= 0.0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        pts = [TracePoint(float(rng.uniform()), float(rng.uniform()), 0, i) for i in range(5)]
        a = render_heatmap(pts, 9, 7, sigma=1.2).grid
        b = render_heatmap(list(reversed(pts)), 9, 7, sigma=1.2).grid
        assert np.array_equal(a, b)

    def test_non_positive_sigma_rejected(self):
        with pytest.raises(DataError, match="sigma"):
            render_heatmap([], 4, 4, sigma=0.0, keyframe_index=0)

    def test_keyframe_mismatch_rejected(self):
        pts = [TracePoint(0.5, 0.5, 0, 0), TracePoint(0.5, 0.5, 1, 0)]
        with pytest.raises(DataError, match="keyframes"):
            render_heatmap(pts, 4, 4, sigma=1.0)
        with pytest.raises(DataError):
            render_heatmap([TracePoint(0.5, 0.5, 0, 0)], 4, 4, sigma=1.0, keyframe_index=1)

    def test_default_sigma_is_two_percent_of_diagonal(self):
        assert default_sigma(30, 40) == pytest.approx(0.02 * 50)


class TestPatchify:
    def test_spelled_out_indexing(self):
        field = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        pg = patchify(field, 2)
        assert pg.data[0, 0, 0, 0].tolist() == [[0.0, 1.0], [4.0, 5.0]]
        assert pg.data[0, 0, 1, 1].tolist() == [[10.0, 11.0], [14.0, 15.0]]

    def test_single_patch_degenerate(self):
        field = np.random.default_rng(0).normal(size=(1, 2, 6, 6))
        pg = patchify(field, 6)
        assert (pg.grid_h, pg.grid_w) == (1, 1)
        assert np.array_equal(pg.data[0, 1, 0, 0], field[0, 1])

    def test_matches_six_nested_loop_oracle(self):
        rng = np.random.default_rng(3)
        field = rng.normal(size=(2, 3, 8, 8))
        pg = patchify(field, 4)
        for t in range(2):
            for c in range(3):
                for i in range(2):
                    for j in range(2):
                        for a in range(4):
                            for b in range(4):
                                assert pg.data[t, c, i, j, a, b] == field[t, c, i * 4 + a, j * 4 + b]

    def test_non_divisible_rejected_by_name(self):
        with pytest.raises(DataError, match="H=5, W=4.*p=2"):
            patchify(np.zeros((1, 1, 5, 4)), 2)

    def test_round_trip_exact(self):
        field = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        assert np.array_equal(unpatchify(patchify(field, 2)), field)

    def test_zero_preservation(self):
        assert not unpatchify(patchify(np.zeros((2, 1, 4, 6)), 2)).any()

    def test_randomized_round_trip_bit_exact(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            p = int(rng.integers(1, 5))
            t = int(rng.integers(1, 4))
            c = int(rng.integers(1, 4))
            h = p * int(rng.integers(1, 5))
            w = p * int(rng.integers(1, 5))
            field = rng.normal(size=(t, c, h, w))
            back = unpatchify(patchify(field, p))
            assert back.dtype == field.dtype
            assert np.array_equal(back, field)


class TestHeatmapStorage:
    def test_glhm_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        grid = rng.uniform(size=(10, 14)).astype(np.float32).astype(np.float64)
        hm = GazeHeatmap(keyframe_index=1, grid=grid)
        path = tmp_path / "map.glhm"
        write_heatmap_glhm(hm, path)
        raw = path.read_bytes()
        assert raw[:4] == b"GLHM"
        assert len(raw) == 16 + 4 * 10 * 14
        back = read_heatmap_glhm(path, keyframe_index=1)
        assert np.array_equal(back.grid, grid)

    def test_glhm_truncation_detected(self, tmp_path):
        path = tmp_path / "map.glhm"
        write_heatmap_glhm(GazeHeatmap(0, np.zeros((2, 2))), path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(DataError, match="truncated"):
            read_heatmap_glhm(path)

    def test_png_export(self, tmp_path):
        from PIL import Image

        grid = np.zeros((4, 4))
        grid[1, 2] = 1.0
        export_heatmap_png(GazeHeatmap(0, grid), tmp_path / "map.png")
        img = np.asarray(Image.open(tmp_path / "map.png"))
        assert img.shape == (4, 4)
        assert img[1, 2] == 255
        assert img[0, 0] == 0
