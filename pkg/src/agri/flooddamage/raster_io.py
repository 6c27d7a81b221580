"""
FR1 raster container.

Layout (little-endian):
    magic      8 bytes  b"FLRASTR1"
    width      u32
    height     u32
    bands      u32
    geo        6 x f64  (origin_x, pixel_size_x, 0, origin_y, 0, pixel_size_y)
    nodata     f32      sentinel value
    flags      u32      RasterKind
    payload    bands x height x width f32, band-major, row-major
    mask       ceil(width * height / 8) bytes, bit = 1 -> invalid; pixel
               8k + i is bit i of byte k
"""

import logging
import struct
from pathlib import Path

import numpy as np
from rxn.utilities.files import PathLike

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    InvalidHeaderError,
    TruncatedPayloadError,
)
from .raster import GeoTransform, Raster, RasterKind
from .utils import atomic_write_bytes, ensure_input_file

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

FR1_MAGIC = b"FLRASTR1"
_HEADER = struct.Struct("<3I6dfI")

# Largest payload accepted when decoding (number of f32 values).
MAX_VALUES = 2**31


def encode_raster(raster: Raster) -> bytes:
    header = _HEADER.pack(
        raster.width,
        raster.height,
        raster.bands,
        *raster.geo.to_coefficients(),
        raster.nodata_value,
        int(raster.kind),
    )
    payload = np.ascontiguousarray(raster.data, dtype="<f4").tobytes()
    mask = np.packbits(raster.nodata_mask.ravel(), bitorder="little").tobytes()
    return FR1_MAGIC + header + payload + mask


def decode_raster(buffer: bytes) -> Raster:
    """
    Decode the bytes of an FR1 file.

    Raises:
        BadMagicError: the buffer does not start with the FR1 magic.
        TruncatedPayloadError: the buffer is shorter than the header announces.
        DimensionOverflowError: the announced dimensions are zero or too large.
        InvalidHeaderError: rotated or degenerate geotransform, unknown kind.
    """
    if buffer[: len(FR1_MAGIC)] != FR1_MAGIC:
        raise BadMagicError(f"Bad FR1 magic: {buffer[: len(FR1_MAGIC)]!r}")
    offset = len(FR1_MAGIC)
    if len(buffer) < offset + _HEADER.size:
        raise TruncatedPayloadError("FR1 header is truncated.")
    (
        width,
        height,
        bands,
        origin_x,
        pixel_size_x,
        rot_x,
        origin_y,
        rot_y,
        pixel_size_y,
        nodata_value,
        flags,
    ) = _HEADER.unpack_from(buffer, offset)
    offset += _HEADER.size

    if width == 0 or height == 0 or bands == 0:
        raise DimensionOverflowError(f"Empty FR1 dimensions {width}x{height}x{bands}")
    n_pixels = width * height
    n_values = n_pixels * bands
    if n_values > MAX_VALUES:
        raise DimensionOverflowError(
            f"FR1 dimensions {width}x{height}x{bands} exceed {MAX_VALUES} values"
        )

    payload_size = 4 * n_values
    mask_size = (n_pixels + 7) // 8
    if len(buffer) < offset + payload_size + mask_size:
        raise TruncatedPayloadError(
            f"FR1 payload truncated: expected {offset + payload_size + mask_size} "
            f"bytes, got {len(buffer)}"
        )

    data = np.frombuffer(buffer, dtype="<f4", count=n_values, offset=offset)
    data = data.astype(np.float32).reshape(bands, height, width)
    offset += payload_size
    mask_bytes = np.frombuffer(buffer, dtype=np.uint8, count=mask_size, offset=offset)
    mask = np.unpackbits(mask_bytes, count=n_pixels, bitorder="little")
    mask = mask.astype(bool).reshape(height, width)

    try:
        geo = GeoTransform.from_coefficients(
            (origin_x, pixel_size_x, rot_x, origin_y, rot_y, pixel_size_y)
        )
        kind = RasterKind(flags)
    except ValueError as e:
        raise InvalidHeaderError(f"Invalid FR1 header: {e}") from e
    return Raster(
        data=data,
        nodata_mask=mask,
        geo=geo,
        nodata_value=float(nodata_value),
        kind=kind,
    )


def read_raster(path: PathLike) -> Raster:
    path = ensure_input_file(path)
    raster = decode_raster(path.read_bytes())
    logger.debug(
        f'Read raster "{path}" ({raster.width}x{raster.height}x{raster.bands}).'
    )
    return raster


def write_raster(raster: Raster, path: PathLike) -> None:
    atomic_write_bytes(Path(path), encode_raster(raster))
    logger.debug(f'Wrote raster "{path}".')
