from .change_detection import DamageLabel, ThresholdConfig, delta_ndvi  # noqa: F401
from .raster import GeoTransform, QualityFlag, QualityMask, Raster  # noqa: F401
from .raster_io import read_raster, write_raster  # noqa: F401
from .synthdata import SceneBundle, SceneSpec, generate_scene  # noqa: F401

__version__ = "0.1.0"  # managed by bump2version
