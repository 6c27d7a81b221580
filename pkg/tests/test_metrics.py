import math

import numpy as np
import pytest
from oracles import windowed_ssim
from scipy import ndimage

from agri.flooddamage.errors import GridMismatchError, ShapeError
from agri.flooddamage.metrics import (
    SsimMode,
    SsimParams,
    confusion,
    confusion_from_arrays,
    f1_scores,
    gaussian_window,
    mse,
    psnr,
    ssim,
)
from agri.flooddamage.raster import GeoTransform, Raster


def _field(seed: int, size: int = 32) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.clip(ndimage.gaussian_filter(rng.standard_normal((size, size)), 2), -1, 1)


def test_psnr_of_a_constant_offset():
    x = np.zeros((8, 8))

    # MSE 0.04 with L = 2: 10 log10(4 / 0.04) = 20 dB
    assert psnr(x, x + 0.2) == pytest.approx(20.0)
    assert mse(x, x + 0.2) == pytest.approx(0.04)
    assert psnr(x, x) == math.inf


def test_psnr_ignores_invalid_pixels():
    x = np.zeros((2, 2))
    y = np.array([[0.2, 0.2], [0.2, np.nan]])
    mask = np.array([[True, True], [True, True]])

    assert psnr(x, y, valid_mask=mask) == pytest.approx(20.0)
    with pytest.raises(ShapeError):
        mse(x, y, valid_mask=np.zeros((2, 2), dtype=bool))
    with pytest.raises(ShapeError):
        mse(x, np.zeros((3, 3)))


def test_gaussian_window():
    window = gaussian_window(11, 1.5)

    assert window.shape == (11, 11)
    assert window.sum() == pytest.approx(1.0)
    assert np.unravel_index(window.argmax(), window.shape) == (5, 5)


def test_ssim_of_identical_images():
    x = _field(0)

    assert ssim(x, x) == pytest.approx(1.0)
    global_params = SsimParams(mode=SsimMode.GLOBAL)
    assert ssim(x, x, global_params) == pytest.approx(1.0)


def test_ssim_matches_a_window_by_window_computation():
    x = _field(1, size=16)
    y = np.clip(x + 0.1 * np.random.default_rng(2).standard_normal(x.shape), -1, 1)
    valid = np.ones(x.shape, dtype=bool)
    valid[3, 14] = False
    params = SsimParams()

    value = ssim(x, y, params, valid)

    assert value == pytest.approx(windowed_ssim(x, y, valid, params), abs=1e-6)
    assert -1.0 <= value < 1.0


def test_ssim_decreases_with_noise():
    x = _field(3)
    rng = np.random.default_rng(4)
    slightly = x + 0.02 * rng.standard_normal(x.shape)
    strongly = x + 0.3 * rng.standard_normal(x.shape)

    assert ssim(x, strongly) < ssim(x, slightly) < 1.0


def test_ssim_edge_cases():
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))
    # every window touches an invalid pixel
    valid = np.ones((16, 16), dtype=bool)
    valid[8, 8] = False
    with pytest.raises(ShapeError):
        ssim(np.zeros((16, 16)), np.zeros((16, 16)), valid_mask=valid)
    with pytest.raises(ValueError):
        SsimParams(window_size=10)


def test_confusion_matrix():
    truth = np.array([[0, 0, 1], [1, 2, 2]])
    pred = np.array([[0, 1, 1], [2, 2, 2]])

    cm = confusion_from_arrays(truth, pred)

    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 1], [0, 0, 2]]
    assert cm.total == 6
    assert cm.pixel_accuracy() == pytest.approx(4 / 6)

    with pytest.raises(ShapeError):
        confusion_from_arrays(np.array([3]), np.array([0]))


def test_f1_scores():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([0, 1, 1, 1, 2, 0])

    scores = f1_scores(confusion_from_arrays(truth, pred))

    assert scores.f1 == pytest.approx((0.5, 0.8, 2 / 3))
    assert scores.precision == pytest.approx((0.5, 2 / 3, 1.0))
    assert scores.recall == pytest.approx((0.5, 1.0, 0.5))
    assert scores.macro_f1 == pytest.approx((0.5 + 0.8 + 2 / 3) / 3)

    perfect = f1_scores(confusion_from_arrays(truth, truth))
    assert perfect.f1 == (1.0, 1.0, 1.0)


def test_absent_classes_score_zero():
    # Partial is absent from both truth and prediction
    truth = np.array([2, 2, 2, 2, 2, 2, 0])
    pred = np.array([2, 2, 2, 2, 0, 0, 2])

    scores = f1_scores(confusion_from_arrays(truth, pred))

    assert scores.precision[1] == 0.0
    assert scores.recall[1] == 0.0
    assert scores.f1[1] == 0.0
    assert scores.precision[2] == pytest.approx(0.8)
    assert scores.recall[2] == pytest.approx(4 / 6)


def test_confusion_of_rasters():
    geo = GeoTransform(0.0, 0.0, 1.0, -1.0)
    truth = Raster.from_array(np.array([[0.0, 1.0, np.nan]]), geo)
    pred = Raster.from_array(np.array([[0.0, 2.0, 2.0]]), geo)

    assert confusion(truth, pred).total == 2
    with pytest.raises(GridMismatchError):
        confusion(truth, Raster.from_array(np.zeros((1, 3)), geo.offset(1, 0)))
