import numpy as np
import pytest

from agri.flooddamage.chips import chip_origins, extract_chips
from agri.flooddamage.errors import GridMismatchError
from agri.flooddamage.raster import GeoTransform, Raster

GEO = GeoTransform(0.0, 0.0, 1.0, -1.0)


def test_chip_origins():
    assert chip_origins(10, 4, 3) == [0, 3, 6]
    assert chip_origins(10, 4, 4) == [0, 4]
    assert chip_origins(4, 4, 1) == [0]
    assert chip_origins(3, 4, 1) == []


def test_aligned_chips_in_row_major_order():
    values = np.arange(36, dtype=np.float32).reshape(6, 6)
    a = Raster.from_array(values, GEO)
    b = Raster.from_array(-values, GEO)

    chips = extract_chips([a, b], chip_size=3, stride=3)

    assert [(c.origin_x, c.origin_y) for c in chips] == [(0, 0), (3, 0), (0, 3), (3, 3)]
    second = chips[1]
    assert second.size == 3
    assert second.rasters[0].values[0].tolist() == [3.0, 4.0, 5.0]
    assert np.array_equal(second.rasters[1].values, -second.rasters[0].values)
    assert second.rasters[0].geo == GEO.offset(3, 0)


def test_chips_with_nodata_are_skipped():
    values = np.ones((4, 4))
    values[0, 0] = np.nan
    raster = Raster.from_array(values, GEO)

    chips = extract_chips([raster], chip_size=2, stride=2)
    assert [(c.origin_x, c.origin_y) for c in chips] == [(2, 0), (0, 2), (2, 2)]

    # one nodata pixel out of four is accepted with a 25% tolerance
    assert len(extract_chips([raster], 2, 2, max_nodata_fraction=0.25)) == 4


def test_invalid_arguments():
    raster = Raster.from_array(np.ones((4, 4)), GEO)

    with pytest.raises(ValueError):
        extract_chips([raster], 0, 1)
    with pytest.raises(GridMismatchError):
        extract_chips([raster, Raster.from_array(np.ones((4, 5)), GEO)], 2, 2)
    assert extract_chips([raster], 8, 1) == []
