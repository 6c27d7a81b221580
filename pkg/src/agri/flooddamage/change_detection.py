"""
Change feature and rule-based damage labels: delta NDVI, fixed thresholds,
majority smoothing and small-object removal.
"""

import logging
from enum import IntEnum
from typing import List

import numpy as np
from pydantic import BaseModel, model_validator
from scipy import ndimage

from .raster import Raster, RasterKind, require_cogridded, require_single_band

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# 4-connectivity
_CROSS = ndimage.generate_binary_structure(2, 1)


class DamageLabel(IntEnum):
    NO = 0
    PARTIAL = 1
    FULL = 2


N_CLASSES = len(DamageLabel)


class ThresholdConfig(BaseModel):
    """Delta NDVI thresholds: Partial from t_partial, Full from t_full (inclusive)."""

    t_partial: float = 0.15
    t_full: float = 0.40

    @model_validator(mode="after")
    def _check_order(self) -> "ThresholdConfig":
        if not -2.0 < self.t_partial < self.t_full < 2.0:
            raise ValueError(
                f"Thresholds must satisfy -2 < t_partial < t_full < 2, got "
                f"{self.t_partial}, {self.t_full}"
            )
        return self


def delta_ndvi(pre: Raster, post: Raster) -> Raster:
    """
    Pre-flood minus post-flood NDVI; positive values mean vegetation loss.

    Raises:
        GridMismatchError: if the rasters are not co-gridded.
    """
    require_single_band(pre, post)
    require_cogridded(pre, post)
    delta = pre.values.astype(np.float64) - post.values.astype(np.float64)
    return Raster(
        data=np.clip(delta, -2.0, 2.0),
        nodata_mask=pre.nodata_mask | post.nodata_mask,
        geo=pre.geo,
        nodata_value=pre.nodata_value,
    )


def threshold_label(delta: Raster, config: ThresholdConfig) -> Raster:
    """
    Full where delta >= t_full, Partial where t_partial <= delta < t_full,
    No elsewhere; nodata passes through.
    """
    require_single_band(delta)
    values = delta.values
    labels = np.full(values.shape, int(DamageLabel.NO))
    labels[values >= np.float32(config.t_partial)] = DamageLabel.PARTIAL
    labels[values >= np.float32(config.t_full)] = DamageLabel.FULL
    return delta.replace(data=labels.astype(np.float32), kind=RasterKind.LABELS)


def _class_grid(labels: Raster) -> np.ndarray:
    """Integer labels, -1 at nodata."""
    return np.where(labels.nodata_mask, -1, np.rint(labels.values)).astype(np.int64)


def morphological_smooth(labels: Raster, window: int = 3) -> Raster:
    """
    Majority vote over the valid pixels of a square window.

    A tie keeps the center label when it is among the most frequent ones,
    otherwise the lowest tied class wins. Nodata pixels are unchanged and
    never vote.

    Args:
        labels: damage-label raster.
        window: odd window size.
    """
    if window < 1 or window % 2 != 1:
        raise ValueError(f"Smoothing window must be odd, got {window}")
    require_single_band(labels)
    grid = _class_grid(labels)
    footprint = np.ones((window, window), dtype=np.int64)
    counts = np.stack(
        [
            ndimage.convolve((grid == c).astype(np.int64), footprint, mode="constant")
            for c in range(N_CLASSES)
        ]
    )
    best = counts.max(axis=0)
    center = np.maximum(grid, 0)[np.newaxis]
    center_count = np.take_along_axis(counts, center, axis=0)[0]
    voted = np.where(center_count == best, grid, counts.argmax(axis=0))
    smoothed = np.where(labels.nodata_mask, labels.values, voted)
    changed = int(((voted != grid) & labels.valid_mask).sum())
    logger.debug(f"Majority smoothing ({window}x{window}) changed {changed} pixels.")
    return labels.replace(data=smoothed.astype(np.float32), kind=RasterKind.LABELS)


def small_object_removal(labels: Raster, min_size: int = 10) -> Raster:
    """
    Relabel 4-connected components smaller than ``min_size`` pixels.

    A small component takes the most frequent label among the valid pixels
    4-adjacent to it (each neighbor pixel counted once; ties go to the lowest
    class, so No wins any tie it is part of). Components without valid
    neighbors are kept. All decisions are taken on the input map.

    Args:
        labels: damage-label raster.
        min_size: smallest component size kept as is, >= 1.
    """
    if min_size < 1:
        raise ValueError(f"min_size must be >= 1, got {min_size}")
    require_single_band(labels)
    grid = _class_grid(labels)
    height, width = grid.shape
    output = grid.copy()
    relabeled = 0

    for label in range(N_CLASSES):
        components, n_components = ndimage.label(grid == label, structure=_CROSS)
        if n_components == 0:
            continue
        sizes = np.bincount(components.ravel())
        for index, box in enumerate(ndimage.find_objects(components), start=1):
            if box is None or sizes[index] >= min_size:
                continue
            rows = slice(max(box[0].start - 1, 0), min(box[0].stop + 1, height))
            cols = slice(max(box[1].start - 1, 0), min(box[1].stop + 1, width))
            component = components[rows, cols] == index
            ring = ndimage.binary_dilation(component, structure=_CROSS) & ~component
            neighbors = grid[rows, cols][ring]
            neighbors = neighbors[neighbors >= 0]
            if neighbors.size == 0:
                continue
            output[rows, cols][component] = np.bincount(
                neighbors, minlength=N_CLASSES
            ).argmax()
            relabeled += 1

    logger.debug(f"Small-object removal relabeled {relabeled} components.")
    values = np.where(labels.nodata_mask, labels.values, output)
    return labels.replace(data=values.astype(np.float32), kind=RasterKind.LABELS)


def derive_labels(
    delta: Raster, config: ThresholdConfig, smooth_window: int = 3
) -> Raster:
    """Threshold labels followed by majority smoothing."""
    return morphological_smooth(threshold_label(delta, config), smooth_window)


def class_fractions(labels: Raster) -> List[float]:
    """Fraction of the valid pixels in each damage class."""
    grid = _class_grid(labels)
    valid = grid[grid >= 0]
    if valid.size == 0:
        return [0.0] * N_CLASSES
    counts = np.bincount(valid, minlength=N_CLASSES)[:N_CLASSES]
    return [float(c) / valid.size for c in counts]
