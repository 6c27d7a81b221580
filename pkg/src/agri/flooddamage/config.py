"""
Configuration for agri-flood-damage.

Two layers: environment settings (``FLOODDAMAGE_`` variables) and the
pipeline configuration, a plain-text file of ``key = value`` lines with
dotted keys for the sub-records::

    # comment
    scale = 3
    edsr.n_resblocks = 16
    sr_schedule.learning_rate = 1e-4
    unet.class_weights = 1.0, 2.0, 4.0

Values are parsed by the pydantic models; ``none`` stands for an unset
optional value and commas separate sequence items. The packaged defaults
are layered first, then the user file, then the ``key=value`` overrides.
"""

import hashlib
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from rxn.utilities.files import PathLike

from .change_detection import ThresholdConfig
from .defaults import default_config_text
from .edsr import DEFAULT_SR_CHIP, EdsrConfig
from .errors import ConfigError
from .metrics import SsimParams
from .training import TrainSchedule
from .unet import DEFAULT_SEG_CHIP, UnetConfig
from .utils import ensure_input_file

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

NONE_LITERAL = "none"


class Settings(BaseSettings):
    """
    Process-wide settings read from the environment.

    FLOODDAMAGE_WORK_DIR, FLOODDAMAGE_LOG_LEVEL and FLOODDAMAGE_NUM_THREADS
    override the defaults below.
    """

    # default directory for the outputs of the command-line tools
    work_dir: Path = Path("flooddamage_work")
    log_level: str = "INFO"
    # reserved; all computations are single-threaded
    num_threads: int = 1

    model_config = SettingsConfigDict(env_prefix="FLOODDAMAGE_")


@lru_cache()
def get_settings() -> Settings:
    """Settings built once from the FLOODDAMAGE_ environment and reused."""
    return Settings()  # type:ignore


def _sr_schedule() -> TrainSchedule:
    return TrainSchedule(learning_rate=1e-4)


def _seg_schedule() -> TrainSchedule:
    return TrainSchedule(learning_rate=1e-3)


class PipelineConfig(BaseModel):
    """
    Everything a pipeline run depends on besides its input files.

    Attributes:
        seed: seed of model initialization and data shuffling.
        scale: super-resolution factor r.
        sr_chip: HR size of the super-resolution training chips.
        seg_chip: size of the segmentation training chips.
        max_nodata_fraction: chips with more nodata in any member are skipped.
        sr_tile: LR tile size of full-raster super-resolution.
        sr_overlap: LR overlap between super-resolution tiles.
        seg_tile: tile size of full-raster segmentation.
        seg_overlap: overlap between segmentation tiles.
        smooth_window: majority window of the threshold labels.
        min_object_size: small-object threshold of predicted maps (0 disables).
        max_shift: search radius of the co-registration, in pixels.
        val_fraction: share of the training scenes held out for validation.
    """

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    scale: int = Field(default=3, ge=2)
    sr_chip: int = Field(default=DEFAULT_SR_CHIP, ge=1)
    seg_chip: int = Field(default=DEFAULT_SEG_CHIP, ge=1)
    max_nodata_fraction: float = Field(default=0.0, ge=0, le=1)
    sr_tile: int = Field(default=64, ge=1)
    sr_overlap: int = Field(default=8, ge=0)
    seg_tile: int = Field(default=256, ge=1)
    seg_overlap: int = Field(default=32, ge=0)
    smooth_window: int = Field(default=3, ge=1)
    min_object_size: int = Field(default=10, ge=0)
    max_shift: int = Field(default=8, ge=1)
    val_fraction: float = Field(default=0.2, gt=0, lt=1)
    edsr: EdsrConfig = Field(default_factory=EdsrConfig)
    unet: UnetConfig = Field(default_factory=UnetConfig)
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    sr_schedule: TrainSchedule = Field(default_factory=_sr_schedule)
    seg_schedule: TrainSchedule = Field(default_factory=_seg_schedule)
    ssim: SsimParams = Field(default_factory=SsimParams)

    @model_validator(mode="after")
    def _check_consistency(self) -> "PipelineConfig":
        if self.edsr.scale != self.scale:
            raise ValueError(
                f"edsr.scale ({self.edsr.scale}) differs from scale ({self.scale})"
            )
        if self.sr_chip % self.scale:
            raise ValueError(
                f"sr_chip {self.sr_chip} is not divisible by the scale {self.scale}"
            )
        if self.seg_tile % self.unet.size_multiple:
            raise ValueError(
                f"seg_tile {self.seg_tile} is not a multiple of "
                f"{self.unet.size_multiple}"
            )
        return self

    @property
    def min_size(self) -> Optional[int]:
        """Small-object threshold, None when disabled."""
        return self.min_object_size or None

    def render(self) -> str:
        """Canonical ``key=value`` text: sorted dotted keys, one per line."""
        flat = _flatten(self.model_dump(mode="json"))
        return "".join(f"{key}={_render_value(flat[key])}\n" for key in sorted(flat))

    def config_hash(self) -> str:
        """SHA-256 of the canonical rendering."""
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()


def _flatten(values: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in values.items():
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{prefix}{key}."))
        else:
            flat[f"{prefix}{key}"] = value
    return flat


def _render_value(value: Any) -> str:
    if value is None:
        return NONE_LITERAL
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (list, tuple)):
        return ", ".join(_render_value(v) for v in value)
    return str(value)


def _parse_value(text: str) -> Any:
    if text.lower() == NONE_LITERAL:
        return None
    if "," in text:
        return [item.strip() for item in text.split(",") if item.strip()]
    return text


def _assign(tree: Dict[str, Any], dotted_key: str, value: Any, source: str) -> None:
    parts = dotted_key.split(".")
    if any(not p for p in parts):
        raise ConfigError(f'{source}: malformed key "{dotted_key}"')
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f'{source}: "{part}" is a value, not a section')
        node = child
    if isinstance(node.get(parts[-1]), dict):
        raise ConfigError(f'{source}: "{dotted_key}" is a section, not a value')
    node[parts[-1]] = value


def parse_assignment(line: str, source: str) -> Tuple[str, Any]:
    """Split a ``key = value`` line."""
    if "=" not in line:
        raise ConfigError(f"{source}: expected key = value, got {line!r}")
    key, value = line.split("=", 1)
    key, value = key.strip(), value.strip()
    if not key:
        raise ConfigError(f"{source}: missing key in {line!r}")
    return key, _parse_value(value)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    Parse configuration text into a nested dictionary of raw values.

    Raises:
        ConfigError: for lines that are not ``key = value`` or clashing keys.
    """
    tree: Dict[str, Any] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{line_number}"
        key, value = parse_assignment(line, where)
        _assign(tree, key, value, where)
    return tree


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _check_keys(model: Type[BaseModel], tree: Dict[str, Any], prefix: str = "") -> None:
    for key, value in tree.items():
        field = model.model_fields.get(key)
        if field is None:
            raise ConfigError(f'Unknown configuration key "{prefix}{key}"')
        annotation = field.annotation
        is_section = isinstance(annotation, type) and issubclass(annotation, BaseModel)
        if isinstance(value, dict) != is_section:
            kind = "section" if is_section else "value"
            raise ConfigError(f'Configuration key "{prefix}{key}" must be a {kind}')
        if is_section:
            _check_keys(annotation, value, f"{prefix}{key}.")  # type: ignore[arg-type]


def build_pipeline_config(layers: Iterable[Dict[str, Any]]) -> PipelineConfig:
    """
    Validate the merged configuration layers.

    Raises:
        ConfigError: for unknown keys or invalid values.
    """
    tree: Dict[str, Any] = {}
    for layer in layers:
        _check_keys(PipelineConfig, layer)
        tree = _merge(tree, layer)
    try:
        return PipelineConfig.model_validate(tree)
    except ValidationError as e:
        logger.error(f"Pipeline configuration problem: {e}")
        raise ConfigError(f"Invalid pipeline configuration: {e}") from e


def load_pipeline_config(
    path: Optional[PathLike] = None, overrides: Sequence[str] = ()
) -> PipelineConfig:
    """
    Resolve the pipeline configuration.

    Args:
        path: optional user configuration file layered over the defaults.
        overrides: ``key=value`` strings applied last.

    Raises:
        InputFileError: if ``path`` does not exist.
        ConfigError: for malformed files or overrides and invalid values.
    """
    layers: List[Dict[str, Any]] = [
        parse_config_text(default_config_text(), "<defaults>")
    ]
    if path is not None:
        path = ensure_input_file(path)
        layers.append(parse_config_text(path.read_text(), str(path)))
    override_tree: Dict[str, Any] = {}
    for override in overrides:
        key, value = parse_assignment(override, "--set")
        _assign(override_tree, key, value, "--set")
    layers.append(override_tree)

    config = build_pipeline_config(layers)
    logger.debug(f"Resolved pipeline configuration {config.config_hash()[:12]}.")
    return config
