"""Overlapping tile layouts and blending of per-tile predictions."""

import logging
from typing import Iterator, List, Tuple

import numpy as np

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


def tile_starts(length: int, tile: int, overlap: int, align: int = 1) -> List[int]:
    """
    Start offsets of overlapping tiles covering ``length`` pixels.

    Consecutive tiles overlap by at least ``overlap`` pixels and the last
    tile ends exactly at ``length``. Starts are rounded down to multiples of
    ``align`` (length and tile are expected to be multiples of it).

    Args:
        length: number of pixels along the axis.
        tile: tile size.
        overlap: minimal overlap between consecutive tiles.
        align: granularity of the start offsets.

    Returns:
        the sorted start offsets; [0] when the axis fits in one tile.
    """
    if tile < 1 or overlap < 0 or overlap >= tile:
        raise ValueError(f"Invalid tile size {tile} / overlap {overlap}")
    if length <= tile:
        return [0]
    step = max(align, ((tile - overlap) // align) * align)
    starts = list(range(0, length - tile, step))
    starts.append(((length - tile) // align) * align)
    return sorted(set(starts))


def iter_tiles(
    height: int, width: int, tile: int, overlap: int, align: int = 1
) -> Iterator[Tuple[int, int]]:
    """(row, col) of the tiles, row-major."""
    for row in tile_starts(height, tile, overlap, align):
        for col in tile_starts(width, tile, overlap, align):
            yield row, col


def feather_profile(
    size: int, band: int, ramp_start: bool, ramp_end: bool
) -> np.ndarray:
    """
    1-D blending weights of a tile: linear ramps over ``band`` pixels on the
    sides that overlap a neighbor, 1 elsewhere (always > 0).
    """
    weights = np.ones(size)
    if band <= 0:
        return weights
    ramp = (np.arange(size) + 0.5) / band
    if ramp_start:
        weights = np.minimum(weights, ramp)
    if ramp_end:
        weights = np.minimum(weights, ramp[::-1])
    return weights


class TileBlender:
    """
    Accumulates weighted per-tile predictions into a full-size array.

    The result is the weighted mean of all the tile values covering each
    pixel.
    """

    def __init__(self, channels: int, height: int, width: int):
        self.sums = np.zeros((channels, height, width))
        self.weights = np.zeros((height, width))

    def add(
        self, values: np.ndarray, row: int, col: int, weights: np.ndarray
    ) -> None:
        height, width = values.shape[1:]
        self.sums[:, row : row + height, col : col + width] += values * weights
        self.weights[row : row + height, col : col + width] += weights

    def result(self) -> np.ndarray:
        if not (self.weights > 0).all():
            raise RuntimeError("Some pixels are not covered by any tile.")
        return self.sums / self.weights


def feather_weights(
    tile_height: int,
    tile_width: int,
    row: int,
    col: int,
    height: int,
    width: int,
    band: int,
) -> np.ndarray:
    """2-D feathering weights of the tile at (row, col) in a height x width grid."""
    rows = feather_profile(tile_height, band, row > 0, row + tile_height < height)
    cols = feather_profile(tile_width, band, col > 0, col + tile_width < width)
    return np.outer(rows, cols)
