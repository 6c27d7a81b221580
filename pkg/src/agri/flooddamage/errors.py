"""Exceptions raised by agri-flood-damage.

Each class carries the exit code used by the command-line interface.
"""

from typing import Any, Dict, List, Optional


class FloodDamageError(Exception):
    """Base class for all the errors of the package."""

    exit_code: int = 1


class InputFileError(FloodDamageError):
    """A required input path is missing or cannot be read."""

    exit_code = 2


class ConfigError(FloodDamageError):
    """Malformed configuration file or invalid override."""

    exit_code = 3


class GridMismatchError(FloodDamageError, ValueError):
    """Rasters that must share a grid do not."""

    exit_code = 4


class RasterDecodeError(FloodDamageError):
    """An FR1 file cannot be decoded."""

    exit_code = 5


class BadMagicError(RasterDecodeError):
    pass


class TruncatedPayloadError(RasterDecodeError):
    pass


class DimensionOverflowError(RasterDecodeError):
    pass


class InvalidHeaderError(RasterDecodeError):
    """The FR1 header holds an unsupported geotransform or raster kind."""


class CheckpointError(FloodDamageError):
    """An FLCKPT01 file cannot be decoded or does not fit the model."""

    exit_code = 5


class RegistrationError(FloodDamageError):
    """Co-registration refused (not enough valid overlap)."""

    exit_code = 6


class DivergenceError(FloodDamageError):
    """
    Training produced a non-finite loss.

    Attributes:
        last_good_state: parameters of the best checkpoint seen before the
            divergence (None if no epoch completed).
        history: per-epoch records up to the divergence.
    """

    exit_code = 7

    def __init__(
        self,
        message: str,
        last_good_state: Optional[Dict[str, Any]] = None,
        history: Optional[List[Any]] = None,
    ):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.history = [] if history is None else history


class NonFiniteGradientError(FloodDamageError):
    """An optimizer step was refused because of a non-finite gradient."""

    exit_code = 7


class ShapeError(FloodDamageError, ValueError):
    """Incompatible array shapes or invalid values for an operation."""

    exit_code = 8
