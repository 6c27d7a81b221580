"""
Evaluation metrics: MSE / PSNR / SSIM for super-resolved NDVI, confusion
matrix and class-wise F1 for damage maps.

All metrics ignore the pixels that are invalid in either input.
"""

import logging
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from attr import define
from pydantic import BaseModel, Field, field_validator
from scipy import ndimage

from .errors import ShapeError
from .raster import Raster, require_cogridded, require_single_band

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

NDVI_DATA_RANGE = 2.0
# Below this MSE the images are considered identical (PSNR = inf).
PSNR_MSE_FLOOR = 1e-12
N_DAMAGE_CLASSES = 3


def _joint_valid(
    x: np.ndarray, y: np.ndarray, valid_mask: Optional[np.ndarray]
) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeError(f"Metric inputs differ in shape: {x.shape} vs {y.shape}")
    valid = np.isfinite(x) & np.isfinite(y)
    if valid_mask is not None:
        valid &= np.asarray(valid_mask, dtype=bool)
    return valid


def mse(x: np.ndarray, y: np.ndarray, valid_mask: Optional[np.ndarray] = None) -> float:
    """
    Mean squared error over the jointly valid pixels.

    Raises:
        ShapeError: for different shapes or when no pixel is valid.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    valid = _joint_valid(x, y, valid_mask)
    if not valid.any():
        raise ShapeError("No jointly valid pixels to compare.")
    diff = x[valid] - y[valid]
    return float(np.mean(diff * diff))


def psnr(
    x: np.ndarray,
    y: np.ndarray,
    data_range: float = NDVI_DATA_RANGE,
    valid_mask: Optional[np.ndarray] = None,
) -> float:
    """
    Peak signal-to-noise ratio, 10 log10(L^2 / MSE), in dB.

    Args:
        x: first image.
        y: second image, same shape.
        data_range: dynamic range L of the signal (2.0 for NDVI).
        valid_mask: pixels taking part in the comparison.

    Returns:
        the PSNR; +inf when the MSE is below 1e-12.
    """
    error = mse(x, y, valid_mask)
    if error < PSNR_MSE_FLOOR:
        return float("inf")
    return float(10.0 * np.log10(data_range**2 / error))


class SsimMode(str, Enum):
    WINDOWED = "windowed"
    GLOBAL = "global"


class SsimParams(BaseModel):
    data_range: float = Field(default=NDVI_DATA_RANGE, gt=0)
    k1: float = Field(default=0.01, gt=0)
    k2: float = Field(default=0.03, gt=0)
    window_size: int = Field(default=11, ge=1)
    sigma: float = Field(default=1.5, gt=0)
    mode: SsimMode = SsimMode.WINDOWED

    @field_validator("window_size")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 != 1:
            raise ValueError(f"SSIM window size must be odd, got {value}")
        return value

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2


def gaussian_profile(size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian of odd length centered on the middle tap."""
    coords = np.arange(size) - size // 2
    profile = np.exp(-(coords**2) / (2.0 * sigma**2))
    return profile / profile.sum()


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    profile = gaussian_profile(size, sigma)
    return np.outer(profile, profile)


def _ssim_formula(
    mu_x: np.ndarray,
    mu_y: np.ndarray,
    var_x: np.ndarray,
    var_y: np.ndarray,
    cov: np.ndarray,
    c1: float,
    c2: float,
) -> np.ndarray:
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return numerator / denominator


def _valid_filter(image: np.ndarray, profile: np.ndarray) -> np.ndarray:
    """Separable weighted sums at the window centers lying fully inside."""
    half = profile.size // 2
    out = ndimage.correlate1d(image, profile, axis=0, mode="constant")
    out = ndimage.correlate1d(out, profile, axis=1, mode="constant")
    return out[half : image.shape[0] - half, half : image.shape[1] - half]


def ssim(
    x: np.ndarray,
    y: np.ndarray,
    params: Optional[SsimParams] = None,
    valid_mask: Optional[np.ndarray] = None,
) -> float:
    """
    Structural similarity index.

    In windowed mode the index is evaluated with Gaussian-weighted moments
    at every window position fully inside the image and free of invalid
    pixels, then averaged; in global mode it is evaluated once over all the
    valid pixels.

    Args:
        x: first image (2-D).
        y: second image, same shape.
        params: constants and window; defaults to L=2.0, 11x11 Gaussian with
            sigma 1.5, k1=0.01, k2=0.03.
        valid_mask: pixels taking part in the comparison.

    Raises:
        ShapeError: for different shapes, an image smaller than the window,
            or no valid window / pixel.

    Returns:
        the SSIM in [-1, 1].
    """
    params = SsimParams() if params is None else params
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    valid = _joint_valid(x, y, valid_mask)

    if params.mode is SsimMode.GLOBAL:
        if not valid.any():
            raise ShapeError("No jointly valid pixels to compare.")
        xs, ys = x[valid], y[valid]
        mu_x, mu_y = xs.mean(), ys.mean()
        value = _ssim_formula(
            mu_x,
            mu_y,
            np.mean((xs - mu_x) ** 2),
            np.mean((ys - mu_y) ** 2),
            np.mean((xs - mu_x) * (ys - mu_y)),
            params.c1,
            params.c2,
        )
        return float(value)

    size = params.window_size
    if x.ndim != 2 or min(x.shape) < size:
        raise ShapeError(f"Image {x.shape} smaller than the {size}x{size} SSIM window")
    profile = gaussian_profile(size, params.sigma)
    x = np.where(valid, x, 0.0)
    y = np.where(valid, y, 0.0)

    mu_x = _valid_filter(x, profile)
    mu_y = _valid_filter(y, profile)
    var_x = _valid_filter(x * x, profile) - mu_x * mu_x
    var_y = _valid_filter(y * y, profile) - mu_y * mu_y
    cov = _valid_filter(x * y, profile) - mu_x * mu_y
    index = _ssim_formula(mu_x, mu_y, var_x, var_y, cov, params.c1, params.c2)

    box = np.ones(size)
    invalid_count = _valid_filter((~valid).astype(np.float64), box)
    full_windows = invalid_count < 0.5
    if not full_windows.any():
        raise ShapeError("No SSIM window is free of invalid pixels.")
    return float(index[full_windows].mean())


@define(frozen=True)
class ConfusionMatrix:
    """
    Attributes:
        counts: (n, n) pixel counts, rows = truth, columns = prediction.
    """

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return int(self.counts.shape[0])

    def pixel_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0


def confusion_from_arrays(
    truth: np.ndarray,
    pred: np.ndarray,
    valid_mask: Optional[np.ndarray] = None,
    n_classes: int = N_DAMAGE_CLASSES,
) -> ConfusionMatrix:
    if truth.shape != pred.shape:
        raise ShapeError(f"Label arrays differ in shape: {truth.shape} vs {pred.shape}")
    valid = np.ones(truth.shape, dtype=bool) if valid_mask is None else valid_mask
    t = np.asarray(truth)[valid].astype(np.int64)
    p = np.asarray(pred)[valid].astype(np.int64)
    for name, values in (("truth", t), ("prediction", p)):
        if values.size and (values.min() < 0 or values.max() >= n_classes):
            raise ShapeError(f"{name} labels outside [0, {n_classes - 1}]")
    counts = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def confusion(truth: Raster, pred: Raster) -> ConfusionMatrix:
    """
    Confusion matrix of two damage-label rasters over the jointly valid pixels.

    Raises:
        GridMismatchError: if the rasters are not co-gridded.
    """
    require_single_band(truth, pred)
    require_cogridded(truth, pred)
    valid = truth.valid_mask & pred.valid_mask
    return confusion_from_arrays(truth.values, pred.values, valid)


@define(frozen=True)
class F1Scores:
    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    f1: Tuple[float, ...]

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    safe = np.where(denominator > 0, denominator, 1)
    return np.where(denominator > 0, numerator / safe, 0.0)


def f1_scores(cm: ConfusionMatrix) -> F1Scores:
    """
    Per-class precision, recall and F1.

    A class never predicted (TP + FP = 0) has precision 0, a class absent
    from the truth (TP + FN = 0) has recall 0, and F1 is 0 whenever
    precision + recall = 0.
    """
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    precision = _ratio(tp, counts.sum(axis=0))
    recall = _ratio(tp, counts.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return F1Scores(
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        f1=tuple(float(v) for v in f1),
    )
