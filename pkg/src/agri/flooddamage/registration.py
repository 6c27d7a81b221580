"""Translation-only co-registration by masked normalized cross-correlation."""

import logging
from typing import Optional, Tuple

import numpy as np
from attr import define

from .errors import RegistrationError
from .raster import Raster, require_cogridded, require_single_band
from .resampling import shift_raster

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MIN_VALID_PIXELS = 64 * 64
MIN_OVERLAP_FRACTION = 0.25
# A peak this close to 1 is an exact integer match; no sub-pixel refinement.
EXACT_MATCH_SCORE = 1.0 - 1e-6


@define(frozen=True)
class RegistrationResult:
    """
    Attributes:
        dx: shift (pixels, along columns) to apply to the moving raster.
        dy: shift (pixels, along rows) to apply to the moving raster.
        score: peak normalized cross-correlation in [-1, 1].
    """

    dx: float
    dy: float
    score: float

    def apply(self, moving: Raster) -> Raster:
        return shift_raster(moving, self.dx, self.dy)


def _overlap_slices(shift: int, size: int) -> Tuple[slice, slice]:
    """Slices of reference and moving that overlap for ``ref[i] ~ mov[i - shift]``."""
    reference = slice(max(0, shift), size + min(0, shift))
    moving = slice(max(0, -shift), size - max(0, shift))
    return reference, moving


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denominator = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denominator == 0:
        return 0.0
    return float(np.dot(a, b) / denominator)


def correlation_surface(
    reference: Raster, moving: Raster, max_shift: int
) -> np.ndarray:
    """
    Masked NCC for every integer correction in [-max_shift, max_shift]^2.

    Element [max_shift + dy, max_shift + dx] compares ``reference[y, x]`` with
    ``moving[y - dy, x - dx]`` over the jointly valid overlap; candidates with
    less than a quarter of the pixels in common are -inf.
    """
    height, width = reference.shape
    ref_values = reference.values.astype(np.float64)
    mov_values = moving.values.astype(np.float64)
    ref_valid = reference.valid_mask
    mov_valid = moving.valid_mask
    min_overlap = MIN_OVERLAP_FRACTION * height * width

    size = 2 * max_shift + 1
    surface = np.full((size, size), -np.inf)
    for dy in range(-max_shift, max_shift + 1):
        ref_rows, mov_rows = _overlap_slices(dy, height)
        for dx in range(-max_shift, max_shift + 1):
            ref_cols, mov_cols = _overlap_slices(dx, width)
            valid = ref_valid[ref_rows, ref_cols] & mov_valid[mov_rows, mov_cols]
            if valid.sum() < min_overlap:
                continue
            surface[max_shift + dy, max_shift + dx] = _ncc(
                ref_values[ref_rows, ref_cols][valid],
                mov_values[mov_rows, mov_cols][valid],
            )
    return surface


def _parabola_vertex(minus: float, center: float, plus: float) -> float:
    curvature = minus - 2 * center + plus
    if not np.isfinite(curvature) or curvature >= 0:
        return 0.0
    return float(np.clip(0.5 * (minus - plus) / curvature, -0.5, 0.5))


def _refine_peak(neighborhood: np.ndarray) -> Tuple[float, float]:
    """
    Sub-pixel offset of the maximum of a 3x3 correlation neighborhood.

    Least-squares fit of z = a + b x + c y + d x^2 + e x y + f y^2; falls back
    to independent parabolas along each axis when the fit has no maximum
    within one pixel.
    """
    if np.isfinite(neighborhood).all():
        ys, xs = np.mgrid[-1:2, -1:2]
        x = xs.ravel().astype(np.float64)
        y = ys.ravel().astype(np.float64)
        design = np.stack([np.ones(9), x, y, x * x, x * y, y * y], axis=1)
        coeffs, *_ = np.linalg.lstsq(design, neighborhood.ravel(), rcond=None)
        _, b, c, d, e, f = coeffs
        hessian = np.array([[2 * d, e], [e, 2 * f]])
        if np.linalg.det(hessian) > 0 and hessian[0, 0] < 0:
            offset_x, offset_y = np.linalg.solve(hessian, [-b, -c])
            if abs(offset_x) <= 1 and abs(offset_y) <= 1:
                return float(offset_x), float(offset_y)
    offset_x = _parabola_vertex(*neighborhood[1, :])
    offset_y = _parabola_vertex(*neighborhood[:, 1])
    return offset_x, offset_y


def coregister_translation(
    reference: Raster, moving: Raster, max_shift: int = 8
) -> RegistrationResult:
    """
    Estimate the translation aligning ``moving`` with ``reference``.

    Args:
        reference: single-band reference raster.
        moving: single-band raster on the same grid.
        max_shift: largest integer shift (pixels) searched along each axis.

    Raises:
        RegistrationError: if the rasters have fewer than 64x64 valid pixels
            or no candidate shift has a valid overlap of at least 25%.

    Returns:
        the correction (dx, dy) to apply with shift_raster, and the peak score.
    """
    require_single_band(reference, moving)
    require_cogridded(reference, moving)
    for raster in (reference, moving):
        if raster.valid_mask.sum() < MIN_VALID_PIXELS:
            raise RegistrationError(
                f"Registration needs at least {MIN_VALID_PIXELS} valid pixels."
            )

    surface = correlation_surface(reference, moving, max_shift)
    if not np.isfinite(surface).any():
        raise RegistrationError(
            "Registration refused: valid overlap below "
            f"{MIN_OVERLAP_FRACTION:.0%} for every candidate shift."
        )

    peak_row, peak_col = np.unravel_index(int(np.argmax(surface)), surface.shape)
    score = float(np.clip(surface[peak_row, peak_col], -1.0, 1.0))
    dx = float(peak_col - max_shift)
    dy = float(peak_row - max_shift)

    if score < EXACT_MATCH_SCORE:
        neighborhood = _neighborhood(surface, peak_row, peak_col)
        if neighborhood is not None:
            offset_x, offset_y = _refine_peak(neighborhood)
            dx += offset_x
            dy += offset_y

    logger.info(f"Registration: dx={dx:.3f}, dy={dy:.3f}, score={score:.4f}.")
    return RegistrationResult(dx=dx, dy=dy, score=score)


def _neighborhood(surface: np.ndarray, row: int, col: int) -> Optional[np.ndarray]:
    """3x3 window around the peak, -inf outside the search window."""
    padded = np.pad(surface, 1, constant_values=-np.inf)
    window = padded[row : row + 3, col : col + 3]
    if not np.isfinite(window[1, :]).all() and not np.isfinite(window[:, 1]).all():
        return None
    return window
