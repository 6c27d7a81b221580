import logging
from typing import List, Sequence, Tuple

from attr import define

from .raster import Raster, require_cogridded

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


@define(frozen=True)
class ChipRecord:
    """
    Aligned windows cut from a set of co-gridded rasters.

    Attributes:
        origin_x: column of the upper-left pixel in the source grid.
        origin_y: row of the upper-left pixel in the source grid.
        size: chip width and height in pixels.
        rasters: one window per source raster, in the order given.
    """

    origin_x: int
    origin_y: int
    size: int
    rasters: Tuple[Raster, ...]


def chip_origins(length: int, chip_size: int, stride: int) -> List[int]:
    """Start offsets of the windows fully contained in ``length`` pixels."""
    if chip_size > length:
        return []
    return list(range(0, length - chip_size + 1, stride))


def extract_chips(
    rasters: Sequence[Raster],
    chip_size: int,
    stride: int,
    max_nodata_fraction: float = 0.0,
) -> List[ChipRecord]:
    """
    Cut aligned square chips from co-gridded rasters.

    Windows are visited in row-major order; a chip is kept when every member
    raster has at most ``max_nodata_fraction`` nodata pixels in the window.
    Partial windows at the right and bottom borders are never emitted.

    Args:
        rasters: co-gridded rasters.
        chip_size: chip width and height in pixels.
        stride: step between consecutive windows in pixels.
        max_nodata_fraction: largest accepted fraction of nodata pixels.

    Returns:
        the chips, possibly none.
    """
    if chip_size < 1 or stride < 1:
        raise ValueError(f"Invalid chip size {chip_size} or stride {stride}")
    require_cogridded(*rasters)
    height, width = rasters[0].shape

    chips: List[ChipRecord] = []
    skipped = 0
    for row in chip_origins(height, chip_size, stride):
        for col in chip_origins(width, chip_size, stride):
            windows = tuple(r.window(col, row, chip_size, chip_size) for r in rasters)
            if any(w.nodata_fraction() > max_nodata_fraction for w in windows):
                skipped += 1
                continue
            chips.append(
                ChipRecord(origin_x=col, origin_y=row, size=chip_size, rasters=windows)
            )

    logger.debug(f"Extracted {len(chips)} chips ({skipped} skipped for nodata).")
    return chips
