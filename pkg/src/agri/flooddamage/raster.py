"""Raster data model: georeferenced grids of 32-bit reals with a nodata mask."""

import logging
from enum import IntEnum, IntFlag
from typing import Optional, Tuple

import numpy as np
from attr import define, field

from .errors import GridMismatchError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_NODATA_VALUE = -9999.0


class RasterKind(IntEnum):
    """What the values of a raster mean; stored in the FR1 header flags."""

    CONTINUOUS = 0
    LABELS = 1
    QUALITY = 2
    BOOLEAN = 3


class QualityFlag(IntFlag):
    CLOUD = 1
    SHADOW = 2
    WATER_GLARE = 4
    NODATA = 8


@define(frozen=True)
class GeoTransform:
    """
    North-up affine georeferencing of a grid (rotation terms are always 0).

    Attributes:
        origin_x: map x of the upper-left corner of the upper-left pixel.
        origin_y: map y of the upper-left corner of the upper-left pixel.
        pixel_size_x: map units per pixel along columns, > 0.
        pixel_size_y: map units per pixel along rows, != 0 (negative for
            north-up rasters).
    """

    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float

    def __attrs_post_init__(self) -> None:
        if not self.pixel_size_x > 0:
            raise ValueError(f"pixel_size_x must be > 0, got {self.pixel_size_x}")
        if self.pixel_size_y == 0:
            raise ValueError("pixel_size_y must be non-zero")

    @classmethod
    def from_coefficients(cls, coefficients: Tuple[float, ...]) -> "GeoTransform":
        """Build from the six coefficients (x0, dx, 0, y0, 0, dy)."""
        origin_x, pixel_size_x, rot_x, origin_y, rot_y, pixel_size_y = coefficients
        if rot_x != 0 or rot_y != 0:
            raise ValueError("Rotated geotransforms are not supported.")
        return cls(origin_x, origin_y, pixel_size_x, pixel_size_y)

    def to_coefficients(self) -> Tuple[float, float, float, float, float, float]:
        return (
            self.origin_x,
            self.pixel_size_x,
            0.0,
            self.origin_y,
            0.0,
            self.pixel_size_y,
        )

    def scaled(self, factor: float) -> "GeoTransform":
        """Same origin, pixel sizes multiplied by ``factor``."""
        return GeoTransform(
            self.origin_x,
            self.origin_y,
            self.pixel_size_x * factor,
            self.pixel_size_y * factor,
        )

    def refined(self, factor: int) -> "GeoTransform":
        """Same origin, pixel sizes divided by ``factor``."""
        return GeoTransform(
            self.origin_x,
            self.origin_y,
            self.pixel_size_x / factor,
            self.pixel_size_y / factor,
        )

    def offset(self, col: int, row: int) -> "GeoTransform":
        """Geotransform of a window starting at the given pixel."""
        return GeoTransform(
            self.origin_x + col * self.pixel_size_x,
            self.origin_y + row * self.pixel_size_y,
            self.pixel_size_x,
            self.pixel_size_y,
        )

    def pixel_to_map(self, col: float, row: float) -> Tuple[float, float]:
        return (
            self.origin_x + col * self.pixel_size_x,
            self.origin_y + row * self.pixel_size_y,
        )

    def map_to_pixel(self, x: float, y: float) -> Tuple[float, float]:
        return (
            (x - self.origin_x) / self.pixel_size_x,
            (y - self.origin_y) / self.pixel_size_y,
        )


def _as_data(value: np.ndarray) -> np.ndarray:
    data = np.array(value, dtype=np.float32)
    if data.ndim == 2:
        data = data[np.newaxis]
    return data


@define(frozen=True, eq=False)
class Raster:
    """
    Single- or multi-band grid of 32-bit reals.

    Masked pixels hold ``nodata_value`` in every band; the arrays are
    read-only so that rasters can be shared freely.

    Attributes:
        data: array of shape (bands, height, width), float32.
        nodata_mask: boolean array of shape (height, width), True = invalid.
        geo: georeferencing of the grid.
        nodata_value: sentinel written at masked pixels.
        kind: meaning of the values.
    """

    data: np.ndarray = field(converter=_as_data)
    nodata_mask: np.ndarray
    geo: GeoTransform
    nodata_value: float = DEFAULT_NODATA_VALUE
    kind: RasterKind = RasterKind.CONTINUOUS

    def __attrs_post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[0] < 1:
            raise ValueError(
                f"Raster data must be (bands, h, w), got {self.data.shape}"
            )
        mask = np.asarray(self.nodata_mask, dtype=bool)
        if mask.shape != self.data.shape[1:]:
            raise ValueError(
                f"Mask shape {mask.shape} does not match grid {self.data.shape[1:]}"
            )
        data = self.data
        if mask.any():
            data[:, mask] = np.float32(self.nodata_value)
        data.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "nodata_mask", mask)

    @classmethod
    def from_array(
        cls,
        values: np.ndarray,
        geo: Optional[GeoTransform] = None,
        nodata_mask: Optional[np.ndarray] = None,
        kind: RasterKind = RasterKind.CONTINUOUS,
        nodata_value: float = DEFAULT_NODATA_VALUE,
    ) -> "Raster":
        """
        Convenience constructor.

        Args:
            values: 2-D (single band) or 3-D (bands, h, w) array.
            geo: georeferencing; defaults to a unit grid at the origin.
            nodata_mask: invalid pixels; defaults to the non-finite values.
            kind: meaning of the values.
            nodata_value: sentinel for masked pixels.
        """
        data = _as_data(values)
        if nodata_mask is None:
            nodata_mask = ~np.isfinite(data).all(axis=0)
        if geo is None:
            geo = GeoTransform(0.0, 0.0, 1.0, -1.0)
        return cls(
            data=data,
            nodata_mask=nodata_mask,
            geo=geo,
            nodata_value=nodata_value,
            kind=kind,
        )

    @property
    def bands(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width)"""
        return self.height, self.width

    @property
    def valid_mask(self) -> np.ndarray:
        return ~self.nodata_mask

    @property
    def values(self) -> np.ndarray:
        """First band as a 2-D array."""
        return self.data[0]

    def band(self, index: int) -> "Raster":
        return self.replace(self.data[index : index + 1])

    def replace(
        self,
        data: Optional[np.ndarray] = None,
        nodata_mask: Optional[np.ndarray] = None,
        geo: Optional[GeoTransform] = None,
        kind: Optional[RasterKind] = None,
    ) -> "Raster":
        """New raster with some members replaced."""
        return Raster(
            data=self.data if data is None else data,
            nodata_mask=self.nodata_mask if nodata_mask is None else nodata_mask,
            geo=self.geo if geo is None else geo,
            nodata_value=self.nodata_value,
            kind=self.kind if kind is None else kind,
        )

    def window(self, col: int, row: int, width: int, height: int) -> "Raster":
        """Sub-raster starting at pixel (col, row)."""
        if col < 0 or row < 0 or col + width > self.width or row + height > self.height:
            raise ValueError(
                f"Window ({col}, {row}, {width}, {height}) outside raster "
                f"{self.width}x{self.height}"
            )
        return Raster(
            data=self.data[:, row : row + height, col : col + width],
            nodata_mask=self.nodata_mask[row : row + height, col : col + width],
            geo=self.geo.offset(col, row),
            nodata_value=self.nodata_value,
            kind=self.kind,
        )

    def is_cogridded(self, other: "Raster") -> bool:
        return self.shape == other.shape and self.geo == other.geo

    def equals(self, other: "Raster") -> bool:
        """Bit-exact comparison of values, mask, grid and header fields."""
        return (
            self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and np.array_equal(self.nodata_mask, other.nodata_mask)
            and self.geo == other.geo
            and np.float32(self.nodata_value).tobytes()
            == np.float32(other.nodata_value).tobytes()
            and self.kind == other.kind
        )

    def nodata_fraction(self) -> float:
        return float(self.nodata_mask.mean())


def require_cogridded(*rasters: Raster) -> None:
    """
    Raises:
        GridMismatchError: if the rasters do not share dimensions and geotransform.
    """
    first = rasters[0]
    for other in rasters[1:]:
        if not first.is_cogridded(other):
            raise GridMismatchError(
                f"Rasters are not co-gridded: {first.shape} {first.geo} vs "
                f"{other.shape} {other.geo}"
            )


def require_single_band(*rasters: Raster) -> None:
    for raster in rasters:
        if raster.bands != 1:
            raise ValueError(f"Expected a single-band raster, got {raster.bands} bands")


@define(frozen=True, eq=False)
class QualityMask:
    """
    Per-pixel quality bit flags (see QualityFlag); any set bit makes the
    pixel invalid downstream.
    """

    flags: np.ndarray
    geo: GeoTransform

    def __attrs_post_init__(self) -> None:
        flags = np.asarray(self.flags, dtype=np.uint8).copy()
        if flags.ndim != 2:
            raise ValueError(f"Quality flags must be 2-D, got {flags.shape}")
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @classmethod
    def clear(cls, height: int, width: int, geo: GeoTransform) -> "QualityMask":
        return cls(np.zeros((height, width), dtype=np.uint8), geo)

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.flags.shape[0]), int(self.flags.shape[1])

    @property
    def invalid(self) -> np.ndarray:
        return self.flags != 0

    def has(self, flag: QualityFlag) -> np.ndarray:
        return (self.flags & int(flag)) != 0

    def with_flag(self, flag: QualityFlag, where: np.ndarray) -> "QualityMask":
        flags = self.flags.copy()
        flags[np.asarray(where, dtype=bool)] |= np.uint8(flag)
        return QualityMask(flags, self.geo)

    def to_raster(self) -> Raster:
        return Raster(
            data=self.flags.astype(np.float32),
            nodata_mask=np.zeros(self.shape, dtype=bool),
            geo=self.geo,
            kind=RasterKind.QUALITY,
        )

    @classmethod
    def from_raster(cls, raster: Raster) -> "QualityMask":
        flags = np.where(raster.nodata_mask, int(QualityFlag.NODATA), raster.values)
        return cls(flags.astype(np.uint8), raster.geo)


def boolean_raster(values: np.ndarray, geo: GeoTransform) -> Raster:
    """Raster of 0/1 values (for instance a cropland mask)."""
    values = np.asarray(values, dtype=bool)
    return Raster(
        data=values.astype(np.float32),
        nodata_mask=np.zeros(values.shape, dtype=bool),
        geo=geo,
        kind=RasterKind.BOOLEAN,
    )
