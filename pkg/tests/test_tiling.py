import numpy as np
import pytest

from agri.flooddamage.tiling import (
    TileBlender,
    feather_profile,
    feather_weights,
    iter_tiles,
    tile_starts,
)


def test_tile_starts_cover_the_axis():
    assert tile_starts(64, 64, 8) == [0]
    assert tile_starts(50, 64, 8) == [0]
    assert tile_starts(256, 128, 32) == [0, 96, 128]

    for length, tile, overlap in [(100, 32, 8), (257, 64, 16), (90, 40, 39)]:
        starts = tile_starts(length, tile, overlap)
        assert starts[0] == 0
        assert starts[-1] + tile == length
        for a, b in zip(starts, starts[1:]):
            assert b - a <= tile - overlap


def test_aligned_tile_starts():
    starts = tile_starts(160, 64, 24, align=16)

    assert all(s % 16 == 0 for s in starts)
    assert starts[-1] + 64 == 160
    for a, b in zip(starts, starts[1:]):
        assert a + 64 - b >= 24


def test_invalid_tiles():
    with pytest.raises(ValueError):
        tile_starts(100, 32, 32)
    with pytest.raises(ValueError):
        tile_starts(100, 0, 0)


def test_iter_tiles_row_major():
    assert list(iter_tiles(8, 12, 8, 2)) == [(0, 0), (0, 4)]


def test_feather_profile():
    profile = feather_profile(8, 4, ramp_start=True, ramp_end=False)

    assert profile.tolist() == [0.125, 0.375, 0.625, 0.875, 1.0, 1.0, 1.0, 1.0]
    assert (feather_profile(8, 4, True, True) > 0).all()
    assert feather_profile(8, 0, True, True).tolist() == [1.0] * 8


def test_blending_reproduces_a_global_field():
    height, width, tile, overlap = 40, 50, 16, 6
    field = np.random.default_rng(0).random((2, height, width))
    blender = TileBlender(2, height, width)

    for row, col in iter_tiles(height, width, tile, overlap):
        weights = feather_weights(tile, tile, row, col, height, width, overlap)
        blender.add(field[:, row : row + tile, col : col + tile], row, col, weights)

    assert blender.result() == pytest.approx(field)


def test_uncovered_pixels_are_an_error():
    blender = TileBlender(1, 4, 4)
    blender.add(np.ones((1, 2, 2)), 0, 0, np.ones((2, 2)))

    with pytest.raises(RuntimeError):
        blender.result()
