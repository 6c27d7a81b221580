"""Resampling of rasters onto other grids, and sub-pixel shifts."""

import logging
from enum import Enum
from typing import Callable, Tuple, Union

import numpy as np

from .errors import GridMismatchError
from .raster import GeoTransform, Raster

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# Coordinates closer than this to an integer are snapped to it.
_SNAP_TOLERANCE = 1e-9


class ResamplingMethod(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


def _linear_kernel(frac: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Tap offsets (relative to floor) and weights for linear interpolation."""
    offsets = np.array([0, 1])
    weights = np.stack([1.0 - frac, frac], axis=-1)
    return offsets, weights


def _cubic_kernel(frac: np.ndarray, a: float = -0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Keys cubic convolution, taps at floor - 1 ... floor + 2."""
    offsets = np.array([-1, 0, 1, 2])
    distances = np.abs(frac[..., np.newaxis] - offsets)
    near = (a + 2) * distances**3 - (a + 3) * distances**2 + 1
    far = a * distances**3 - 5 * a * distances**2 + 8 * a * distances - 4 * a
    weights = np.where(distances <= 1, near, np.where(distances < 2, far, 0.0))
    return offsets, weights


KernelFunction = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _snap(coordinates: np.ndarray) -> np.ndarray:
    rounded = np.round(coordinates)
    return np.where(
        np.abs(coordinates - rounded) < _SNAP_TOLERANCE, rounded, coordinates
    )


def _axis_taps(
    coordinates: np.ndarray, size: int, kernel: KernelFunction
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Source indices and weights along one axis.

    Args:
        coordinates: fractional source pixel coordinates (pixel centers at
            integers), already restricted to [0, size - 1].
        size: number of source pixels along the axis.
        kernel: interpolation kernel.

    Returns:
        Tuple: indices clipped to the raster (n, taps) and weights (n, taps).
    """
    base = np.floor(coordinates)
    frac = coordinates - base
    offsets, weights = kernel(frac)
    indices = base[:, np.newaxis].astype(np.int64) + offsets
    # Taps outside the raster are replaced by the edge pixel.
    return np.clip(indices, 0, size - 1), weights


def _interpolate(
    data: np.ndarray,
    invalid: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    kernel: KernelFunction,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Separable kernel interpolation of every band at the grid rows x cols.

    An output pixel is invalid when any tap with a non-zero weight hits an
    invalid source pixel.
    """
    row_idx, row_w = _axis_taps(rows, data.shape[1], kernel)
    col_idx, col_w = _axis_taps(cols, data.shape[2], kernel)

    filled = np.where(invalid, 0.0, data.astype(np.float64))
    out = np.zeros((data.shape[0], rows.size, cols.size))
    touched = np.zeros((rows.size, cols.size), dtype=bool)
    for i in range(row_idx.shape[1]):
        for j in range(col_idx.shape[1]):
            weight = row_w[:, i, np.newaxis] * col_w[np.newaxis, :, j]
            ri = row_idx[:, i, np.newaxis]
            cj = col_idx[np.newaxis, :, j]
            out += filled[:, ri, cj] * weight
            touched |= invalid[ri, cj] & (weight != 0)
    return out.astype(np.float32), touched


def _source_coordinates(
    src_geo: GeoTransform, dst_geo: GeoTransform, n: int, axis: str
) -> np.ndarray:
    """Source pixel coordinates (centers at integers) of destination centers."""
    centers = np.arange(n) + 0.5
    if axis == "x":
        map_coords = dst_geo.origin_x + centers * dst_geo.pixel_size_x
        coords = (map_coords - src_geo.origin_x) / src_geo.pixel_size_x - 0.5
    else:
        map_coords = dst_geo.origin_y + centers * dst_geo.pixel_size_y
        coords = (map_coords - src_geo.origin_y) / src_geo.pixel_size_y - 0.5
    return _snap(coords)


def resample(
    src: Raster,
    target: GeoTransform,
    width: int,
    height: int,
    method: Union[str, ResamplingMethod] = ResamplingMethod.BILINEAR,
) -> Raster:
    """
    Resample a raster onto another grid.

    Destination pixels whose center falls outside the source extent are
    nodata. Nearest-neighbor preserves the mask; bilinear and bicubic mark a
    destination pixel as nodata as soon as one contributing source pixel is
    invalid.

    Args:
        src: raster to resample.
        target: geotransform of the destination grid.
        width: destination width in pixels.
        height: destination height in pixels.
        method: "nearest", "bilinear" or "bicubic".

    Raises:
        GridMismatchError: if the destination grid does not overlap the source.

    Returns:
        Raster on the destination grid.
    """
    method = ResamplingMethod(method)
    if (src.width, src.height) == (width, height) and src.geo == target:
        return src

    cols = _source_coordinates(src.geo, target, width, "x")
    rows = _source_coordinates(src.geo, target, height, "y")
    col_inside = (cols > -0.5) & (cols < src.width - 0.5)
    row_inside = (rows > -0.5) & (rows < src.height - 0.5)
    if not col_inside.any() or not row_inside.any():
        raise GridMismatchError("Source and target extents do not overlap.")
    outside = ~(row_inside[:, np.newaxis] & col_inside[np.newaxis, :])

    if method is ResamplingMethod.NEAREST:
        ri = np.clip(np.floor(rows + 0.5).astype(np.int64), 0, src.height - 1)
        ci = np.clip(np.floor(cols + 0.5).astype(np.int64), 0, src.width - 1)
        data = src.data[:, ri[:, np.newaxis], ci[np.newaxis, :]]
        invalid = src.nodata_mask[ri[:, np.newaxis], ci[np.newaxis, :]]
    else:
        kernel = (
            _linear_kernel if method is ResamplingMethod.BILINEAR else _cubic_kernel
        )
        data, invalid = _interpolate(
            src.data,
            src.nodata_mask,
            np.clip(rows, 0, src.height - 1),
            np.clip(cols, 0, src.width - 1),
            kernel,
        )

    logger.debug(
        f"Resampled {src.width}x{src.height} -> {width}x{height} ({method.value})."
    )
    return Raster(
        data=data,
        nodata_mask=invalid | outside,
        geo=target,
        nodata_value=src.nodata_value,
        kind=src.kind,
    )


def resample_like(
    src: Raster, like: Raster, method: Union[str, ResamplingMethod]
) -> Raster:
    return resample(src, like.geo, like.width, like.height, method)


def upsample(
    src: Raster, factor: int, method: Union[str, ResamplingMethod]
) -> Raster:
    """Resample onto the grid ``factor`` times finer with the same origin."""
    return resample(
        src,
        src.geo.refined(factor),
        src.width * factor,
        src.height * factor,
        method,
    )


def shift_raster(raster: Raster, dx: float, dy: float) -> Raster:
    """
    Bilinear shift of the content by (dx, dy) pixels, on the same grid.

    ``out[y, x] = in[y - dy, x - dx]``. Pixels whose source footprint leaves
    the raster become nodata.
    """
    if dx == 0 and dy == 0:
        return raster
    cols = _snap(np.arange(raster.width) - float(dx))
    rows = _snap(np.arange(raster.height) - float(dy))
    col_inside = (cols >= 0) & (cols <= raster.width - 1)
    row_inside = (rows >= 0) & (rows <= raster.height - 1)
    outside = ~(row_inside[:, np.newaxis] & col_inside[np.newaxis, :])
    data, invalid = _interpolate(
        raster.data,
        raster.nodata_mask,
        np.clip(rows, 0, raster.height - 1),
        np.clip(cols, 0, raster.width - 1),
        _linear_kernel,
    )
    return raster.replace(data=data, nodata_mask=invalid | outside)
