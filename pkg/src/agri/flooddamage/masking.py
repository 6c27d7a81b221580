import logging

import numpy as np
from scipy import ndimage

from .errors import GridMismatchError
from .raster import QualityMask, Raster, require_cogridded, require_single_band

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# Below this |NIR + Red| the index is undefined and the pixel becomes nodata.
NDVI_DENOMINATOR_EPSILON = 1e-6


def compute_ndvi(nir: Raster, red: Raster) -> Raster:
    """
    Normalized difference vegetation index, (NIR - Red) / (NIR + Red).

    Args:
        nir: near-infrared reflectance, single band.
        red: red reflectance, single band, co-gridded with ``nir``.

    Raises:
        GridMismatchError: if the bands are not co-gridded.

    Returns:
        NDVI raster in [-1, 1]; nodata where either input is nodata or the
        denominator vanishes.
    """
    require_single_band(nir, red)
    require_cogridded(nir, red)

    nir_values = nir.values.astype(np.float64)
    red_values = red.values.astype(np.float64)
    denominator = nir_values + red_values
    degenerate = np.abs(denominator) < NDVI_DENOMINATOR_EPSILON
    invalid = nir.nodata_mask | red.nodata_mask | degenerate

    safe = np.where(degenerate, 1.0, denominator)
    ndvi = np.clip((nir_values - red_values) / safe, -1.0, 1.0)
    return Raster(data=ndvi, nodata_mask=invalid, geo=nir.geo)


def ndvi_from_bands(bands: Raster, red_band: int = 0, nir_band: int = 1) -> Raster:
    """NDVI of a multi-band raster (default band order: red, NIR)."""
    return compute_ndvi(bands.band(nir_band), bands.band(red_band))


def apply_masks(raster: Raster, quality: QualityMask, cropland: Raster) -> Raster:
    """
    Invalidate pixels flagged by the quality mask or outside cropland.

    Args:
        raster: raster to mask.
        quality: quality flags on the same grid.
        cropland: boolean raster on the same grid (resample it with
            nearest-neighbor first when it comes at a coarser resolution);
            nodata cropland pixels count as non-cropland.

    Raises:
        GridMismatchError: if the masks are not on the raster's grid.

    Returns:
        masked raster; valid pixels keep their values.
    """
    if quality.shape != raster.shape or quality.geo != raster.geo:
        raise GridMismatchError("Quality mask is not on the raster grid.")
    require_cogridded(raster, cropland)

    outside_cropland = cropland.nodata_mask | (cropland.values == 0)
    invalid = raster.nodata_mask | quality.invalid | outside_cropland
    logger.debug(
        f"Masking: {int(quality.invalid.sum())} flagged pixels, "
        f"{int(outside_cropland.sum())} outside cropland."
    )
    return raster.replace(nodata_mask=invalid)


def fill_nodata_nearest(values: np.ndarray, nodata_mask: np.ndarray) -> np.ndarray:
    """
    Replace invalid pixels by the value of the nearest valid pixel.

    Network inputs cannot carry the nodata sentinel; the filled pixels are
    masked again in the outputs.

    Returns:
        a float32 copy of ``values``; zeros if no pixel is valid.
    """
    values = np.asarray(values, dtype=np.float32)
    if not nodata_mask.any():
        return values.copy()
    if nodata_mask.all():
        return np.zeros_like(values)
    indices = ndimage.distance_transform_edt(
        nodata_mask, return_distances=False, return_indices=True
    )
    return values[tuple(indices)]
