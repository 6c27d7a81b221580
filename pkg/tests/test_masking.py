import numpy as np
import pytest

from agri.flooddamage.errors import GridMismatchError
from agri.flooddamage.masking import (
    apply_masks,
    compute_ndvi,
    fill_nodata_nearest,
    ndvi_from_bands,
)
from agri.flooddamage.raster import (
    GeoTransform,
    QualityFlag,
    QualityMask,
    Raster,
    boolean_raster,
)

GEO = GeoTransform(0.0, 0.0, 1.0, -1.0)


def test_ndvi_values():
    nir = Raster.from_array(np.array([[0.5, 0.3, 0.0, 0.2]]), GEO)
    red = Raster.from_array(np.array([[0.1, 0.3, 0.0, np.nan]]), GEO)

    ndvi = compute_ndvi(nir, red)

    assert ndvi.values[0, 0] == pytest.approx(0.4 / 0.6, abs=1e-6)
    assert ndvi.values[0, 1] == 0.0
    # vanishing denominator and invalid input
    assert ndvi.nodata_mask.tolist() == [[False, False, True, True]]


def test_ndvi_of_a_band_product():
    red = np.full((2, 2), 0.1)
    nir = np.full((2, 2), 0.3)
    bands = Raster.from_array(np.stack([red, nir]), GEO)

    ndvi = ndvi_from_bands(bands)
    assert ndvi.values == pytest.approx(np.full((2, 2), 0.5))

    # swapped band order
    swapped = ndvi_from_bands(bands, red_band=1, nir_band=0)
    assert swapped.values == pytest.approx(np.full((2, 2), -0.5))


def test_ndvi_needs_cogridded_bands():
    nir = Raster.from_array(np.ones((2, 2)), GEO)
    red = Raster.from_array(np.ones((2, 2)), GEO.offset(1, 0))

    with pytest.raises(GridMismatchError):
        compute_ndvi(nir, red)


def test_apply_masks():
    raster = Raster.from_array(np.full((2, 3), 0.6), GEO)
    quality = QualityMask.clear(2, 3, GEO).with_flag(
        QualityFlag.CLOUD, np.array([[True, False, False], [False, False, False]])
    )
    cropland = boolean_raster(np.array([[1, 1, 0], [1, 1, 1]]), GEO)

    masked = apply_masks(raster, quality, cropland)

    assert masked.nodata_mask.tolist() == [[True, False, True], [False, False, False]]
    assert masked.values[1, 1] == pytest.approx(0.6)

    # no mask can make a pixel valid again
    again = apply_masks(
        masked, QualityMask.clear(2, 3, GEO), boolean_raster(np.ones((2, 3)), GEO)
    )
    assert np.array_equal(again.nodata_mask, masked.nodata_mask)


def test_apply_masks_on_another_grid():
    raster = Raster.from_array(np.zeros((2, 2)), GEO)
    cropland = boolean_raster(np.ones((1, 1)), GEO.scaled(2))

    with pytest.raises(GridMismatchError):
        apply_masks(raster, QualityMask.clear(2, 2, GEO), cropland)
    with pytest.raises(GridMismatchError):
        apply_masks(
            raster,
            QualityMask.clear(3, 3, GEO),
            boolean_raster(np.ones((2, 2)), GEO),
        )


def test_fill_nodata_nearest():
    values = np.array([[1.0, 0.0, 0.0, 4.0]])
    mask = np.array([[False, True, True, False]])

    filled = fill_nodata_nearest(values, mask)

    assert filled.tolist() == [[1.0, 1.0, 4.0, 4.0]]
    assert filled.dtype == np.float32
    assert fill_nodata_nearest(values, np.ones_like(mask)).tolist() == [[0.0] * 4]
