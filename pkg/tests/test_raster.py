import numpy as np
import pytest

from agri.flooddamage.errors import GridMismatchError
from agri.flooddamage.raster import (
    GeoTransform,
    QualityFlag,
    QualityMask,
    Raster,
    RasterKind,
    boolean_raster,
    require_cogridded,
)


def test_masked_pixels_hold_the_sentinel():
    values = np.arange(6, dtype=np.float32).reshape(2, 3)
    mask = np.array([[False, True, False], [False, False, True]])
    raster = Raster.from_array(values, nodata_mask=mask, nodata_value=-1.0)

    assert raster.values[0, 1] == -1.0
    assert raster.values[1, 2] == -1.0
    assert raster.values[1, 0] == 3.0
    assert raster.data.dtype == np.float32

    # the source array is copied and the stored arrays are read-only
    assert values[0, 1] == 1.0
    with pytest.raises(ValueError):
        raster.data[0, 0, 0] = 5.0


def test_non_finite_values_become_nodata():
    raster = Raster.from_array(np.array([[1.0, np.nan], [np.inf, 0.5]]))

    assert raster.nodata_mask.tolist() == [[False, True], [True, False]]
    assert raster.nodata_fraction() == 0.5


def test_geotransform_helpers():
    geo = GeoTransform(100.0, 200.0, 10.0, -10.0)

    assert geo.scaled(3) == GeoTransform(100.0, 200.0, 30.0, -30.0)
    assert geo.refined(2) == GeoTransform(100.0, 200.0, 5.0, -5.0)
    assert geo.offset(2, 3) == GeoTransform(120.0, 170.0, 10.0, -10.0)
    assert geo.pixel_to_map(1, 1) == (110.0, 190.0)
    assert geo.map_to_pixel(110.0, 190.0) == (1.0, 1.0)
    assert GeoTransform.from_coefficients(geo.to_coefficients()) == geo

    with pytest.raises(ValueError):
        GeoTransform.from_coefficients((0.0, 1.0, 0.5, 0.0, 0.0, -1.0))
    with pytest.raises(ValueError):
        GeoTransform(0.0, 0.0, 0.0, -1.0)


def test_window_keeps_georeferencing():
    geo = GeoTransform(0.0, 0.0, 2.0, -2.0)
    raster = Raster.from_array(np.arange(16, dtype=np.float32).reshape(4, 4), geo)

    window = raster.window(1, 2, 2, 2)
    assert window.values.tolist() == [[9.0, 10.0], [13.0, 14.0]]
    assert window.geo == GeoTransform(2.0, -4.0, 2.0, -2.0)

    with pytest.raises(ValueError):
        raster.window(3, 3, 2, 2)


def test_cogridded_checks():
    a = Raster.from_array(np.zeros((3, 3)))
    b = Raster.from_array(np.ones((3, 3)))
    c = Raster.from_array(np.ones((3, 3)), GeoTransform(1.0, 0.0, 1.0, -1.0))
    d = Raster.from_array(np.ones((3, 4)))

    require_cogridded(a, b)
    with pytest.raises(GridMismatchError):
        require_cogridded(a, c)
    with pytest.raises(GridMismatchError):
        require_cogridded(a, b, d)

    # the grid mismatch is also a ValueError
    with pytest.raises(ValueError):
        require_cogridded(a, d)


def test_bit_exact_equality():
    a = Raster.from_array(np.array([[0.1, 0.2]]))
    b = Raster.from_array(np.array([[0.1, 0.2]]))
    c = Raster.from_array(np.array([[0.1, 0.2]]), kind=RasterKind.LABELS)

    assert a.equals(b)
    assert not a.equals(c)
    assert not a.equals(a.replace(nodata_mask=np.array([[True, False]])))


def test_band_selection():
    data = np.stack([np.zeros((2, 2)), np.ones((2, 2))])
    raster = Raster.from_array(data)

    assert raster.bands == 2
    assert raster.band(1).bands == 1
    assert raster.band(1).values.tolist() == [[1.0, 1.0], [1.0, 1.0]]


def test_quality_mask_flags():
    geo = GeoTransform(0.0, 0.0, 1.0, -1.0)
    quality = QualityMask.clear(2, 2, geo)
    assert not quality.invalid.any()

    cloud = np.array([[True, False], [False, False]])
    shadow = np.array([[True, True], [False, False]])
    quality = quality.with_flag(QualityFlag.CLOUD, cloud)
    quality = quality.with_flag(QualityFlag.SHADOW, shadow)

    assert quality.has(QualityFlag.CLOUD).tolist() == [[True, False], [False, False]]
    assert quality.has(QualityFlag.SHADOW).tolist() == [[True, True], [False, False]]
    assert quality.flags[0, 0] == QualityFlag.CLOUD | QualityFlag.SHADOW
    assert quality.invalid.sum() == 2

    # through a raster and back; nodata pixels of the raster become NODATA flags
    restored = QualityMask.from_raster(quality.to_raster())
    assert np.array_equal(restored.flags, quality.flags)
    raster = quality.to_raster().replace(
        nodata_mask=np.array([[False, False], [False, True]])
    )
    assert QualityMask.from_raster(raster).has(QualityFlag.NODATA)[1, 1]


def test_boolean_raster():
    raster = boolean_raster(np.array([[1, 0], [0, 2]]), GeoTransform(0, 0, 1, -1))

    assert raster.kind is RasterKind.BOOLEAN
    assert raster.values.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert not raster.nodata_mask.any()
