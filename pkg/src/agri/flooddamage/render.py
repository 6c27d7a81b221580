"""Rendering of label and NDVI rasters as binary PPM (P6) images."""

import io
from enum import Enum
from typing import Union

import numpy as np
from PIL import Image

from .raster import Raster, require_single_band

NODATA_COLOR = (128, 128, 128)

DAMAGE_PALETTE = {
    0: (0, 160, 0),  # No: green
    1: (255, 165, 0),  # Partial: orange
    2: (220, 0, 0),  # Full: red
}

# Diverging ramp: -1 -> red, 0 -> pale yellow, +1 -> green
NDVI_RAMP = np.array(
    [
        [165.0, 0.0, 38.0],
        [255.0, 255.0, 191.0],
        [0.0, 104.0, 55.0],
    ]
)


class RenderStyle(str, Enum):
    DAMAGE_CLASSES = "damage-classes"
    NDVI_DIVERGING = "ndvi-diverging"


def _damage_colors(values: np.ndarray) -> np.ndarray:
    rgb = np.empty(values.shape + (3,), dtype=np.uint8)
    rgb[...] = NODATA_COLOR
    for label, color in DAMAGE_PALETTE.items():
        rgb[values == label] = color
    return rgb


def _ndvi_colors(values: np.ndarray) -> np.ndarray:
    position = np.clip(values.astype(np.float64), -1.0, 1.0) + 1.0  # in [0, 2]
    lower = np.minimum(np.floor(position).astype(int), 1)
    frac = (position - lower)[..., np.newaxis]
    rgb = NDVI_RAMP[lower] * (1.0 - frac) + NDVI_RAMP[lower + 1] * frac
    return np.round(rgb).astype(np.uint8)


def render_map(raster: Raster, style: Union[str, RenderStyle]) -> bytes:
    """
    Color-map a single-band raster and encode it as binary PPM.

    Args:
        raster: damage labels or NDVI / delta-NDVI values.
        style: "damage-classes" (No green, Partial orange, Full red) or
            "ndvi-diverging" (red at -1, pale yellow at 0, green at +1).
            Nodata pixels are gray (128, 128, 128) in both styles.

    Raises:
        ValueError: for an unknown style.

    Returns:
        the PPM file content.
    """
    style = RenderStyle(style)
    require_single_band(raster)
    values = raster.values
    if style is RenderStyle.DAMAGE_CLASSES:
        rgb = _damage_colors(values)
    else:
        rgb = _ndvi_colors(values)
    rgb[raster.nodata_mask] = NODATA_COLOR

    buffer = io.BytesIO()
    Image.fromarray(rgb).save(buffer, format="PPM")
    return buffer.getvalue()
