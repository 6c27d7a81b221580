"""
Deterministic synthetic flood scenes.

A scene is a square of Voronoi parcels observed twice (before and after a
flood) on a fine grid, together with a degraded copy of both dates on a grid
``scale`` times coarser. Damage truth is derived from the fine NDVI pair with
the regular threshold labeling, so the bundle is self-consistent.
"""

import logging
from pathlib import Path
from typing import Dict, Iterator, Tuple

import numpy as np
from attr import define
from pydantic import BaseModel, Field, model_validator
from rxn.utilities.files import PathLike
from scipy import ndimage
from scipy.spatial import cKDTree

from .change_detection import DamageLabel, ThresholdConfig, delta_ndvi, derive_labels
from .errors import GridMismatchError, InputFileError
from .masking import fill_nodata_nearest
from .raster import (
    GeoTransform,
    QualityFlag,
    QualityMask,
    Raster,
    boolean_raster,
    require_single_band,
)
from .raster_io import read_raster, write_raster
from .resampling import ResamplingMethod, resample_like, shift_raster
from .utils import atomic_directory, ensure_input_directory, ensure_input_file

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MANIFEST_NAME = "manifest.txt"
MANIFEST_VERSION = 1

HEALTHY_NDVI = (0.5, 0.9)
# Parcel-level NDVI drops per damage class; with the change texture bounded
# by CHANGE_TEXTURE_LIMIT they stay inside the default threshold bands.
STABLE_DRIFT = (-0.04, 0.04)
PARTIAL_DROP = (0.20, 0.35)
FULL_DROP = (0.50, 0.75)
STRIP_DROP = 0.6
PRE_TEXTURE_STD = 0.02
CHANGE_TEXTURE_STD = 0.005
CHANGE_TEXTURE_LIMIT = 0.015

# Reflectances of contaminated pixels in the band products.
CLOUD_REFLECTANCE = (0.60, 0.62)
GLARE_REFLECTANCE = (0.06, 0.03)
SHADOW_ATTENUATION = 0.3
SHADOW_OFFSET = (3, 3)

BUNDLE_FILES = (
    "pre_hr",
    "post_hr",
    "pre_lr",
    "post_lr",
    "pre_bands",
    "post_bands",
    "pre_quality",
    "post_quality",
    "cropland",
    "truth_labels",
    "parcel_ids",
)


class SceneSpec(BaseModel):
    """
    Parameters of a synthetic scene.

    Attributes:
        seed: seed of the scene; equal seeds give bit-identical bundles.
        hr_size: side of the fine grid in pixels, divisible by ``scale``.
        hr_pixel: fine pixel size in map units.
        scale: ratio between the coarse and the fine pixel size.
        parcel_count: number of Voronoi parcels.
        cropland_fraction: probability for a parcel to be cropland.
        damage_fraction: share of the cropland parcels hit by the flood.
        partial_share: share of the hit parcels that are only partially damaged.
        narrow_feature_count: number of narrow fully damaged strips.
        strip_width_min: narrowest strip, in fine pixels.
        strip_width_max: widest strip, in fine pixels.
        cloud_fraction: share of each coarse band product covered by clouds.
        water_glare_fraction: probability of a glare speck on flooded pixels
            of the post-flood product.
        noise_sigma: sensor noise of the coarse NDVI.
        blur_sigma: point-spread width in coarse pixels.
        misregistration_dx: column displacement of the post-flood band
            product, in coarse pixels.
        misregistration_dy: row displacement of the post-flood band product.
        origin_x: map x of the upper-left corner.
        origin_y: map y of the upper-left corner.
    """

    seed: int = Field(default=0, ge=0)
    hr_size: int = Field(default=768, ge=16)
    hr_pixel: float = Field(default=3.0, gt=0)
    scale: int = Field(default=3, ge=2)
    parcel_count: int = Field(default=120, ge=1)
    cropland_fraction: float = Field(default=0.85, ge=0, le=1)
    damage_fraction: float = Field(default=0.3, ge=0, le=1)
    partial_share: float = Field(default=0.5, ge=0, le=1)
    narrow_feature_count: int = Field(default=6, ge=0)
    strip_width_min: int = Field(default=1, ge=1)
    strip_width_max: int = Field(default=3, ge=1)
    cloud_fraction: float = Field(default=0.0, ge=0, lt=1)
    water_glare_fraction: float = Field(default=0.0, ge=0, le=1)
    noise_sigma: float = Field(default=0.01, ge=0)
    blur_sigma: float = Field(default=0.5, ge=0)
    misregistration_dx: float = 0.0
    misregistration_dy: float = 0.0
    origin_x: float = 500000.0
    origin_y: float = 4000000.0

    @model_validator(mode="after")
    def _check_geometry(self) -> "SceneSpec":
        if self.hr_size % self.scale != 0:
            raise ValueError(
                f"hr_size {self.hr_size} is not divisible by the scale {self.scale}"
            )
        if self.strip_width_min > self.strip_width_max:
            raise ValueError("strip_width_min must not exceed strip_width_max")
        return self

    @property
    def hr_geo(self) -> GeoTransform:
        return GeoTransform(self.origin_x, self.origin_y, self.hr_pixel, -self.hr_pixel)

    @property
    def lr_size(self) -> int:
        return self.hr_size // self.scale


@define(frozen=True, eq=False)
class SceneBundle:
    """
    Co-registered rasters of one synthetic scene.

    Attributes:
        spec: parameters the scene was generated from.
        pre_hr: pre-flood NDVI on the fine grid.
        post_hr: post-flood NDVI on the fine grid.
        pre_lr: pre-flood NDVI on the coarse grid.
        post_lr: post-flood NDVI on the coarse grid.
        pre_bands: pre-flood (red, NIR) product on the coarse grid.
        post_bands: post-flood (red, NIR) product, displaced by the
            configured misregistration.
        pre_quality: quality flags of ``pre_bands``.
        post_quality: quality flags of ``post_bands``.
        cropland: cropland mask on the coarse grid.
        truth_labels: damage labels on the fine grid.
        parcel_ids: parcel index of every fine pixel.
    """

    spec: SceneSpec
    pre_hr: Raster
    post_hr: Raster
    pre_lr: Raster
    post_lr: Raster
    pre_bands: Raster
    post_bands: Raster
    pre_quality: QualityMask
    post_quality: QualityMask
    cropland: Raster
    truth_labels: Raster
    parcel_ids: Raster

    @property
    def scale(self) -> int:
        return self.spec.scale

    def cropland_hr(self) -> Raster:
        """Cropland mask brought to the fine grid (nearest neighbor)."""
        return resample_like(self.cropland, self.pre_hr, ResamplingMethod.NEAREST)

    def rasters(self) -> Iterator[Tuple[str, Raster]]:
        """(name, raster) of every member, in the order of BUNDLE_FILES."""
        for name in BUNDLE_FILES:
            member = getattr(self, name)
            if isinstance(member, QualityMask):
                member = member.to_raster()
            yield name, member


def _box_mean(values: np.ndarray, scale: int) -> np.ndarray:
    height, width = values.shape
    blocks = values.reshape(height // scale, scale, width // scale, scale)
    return blocks.mean(axis=(1, 3))


def degrade_to_lr(
    hr: Raster,
    scale: int,
    blur_sigma: float = 0.5,
    noise_sigma: float = 0.01,
    seed: int = 0,
) -> Raster:
    """
    Simulate the coarse sensor: Gaussian blur, r x r box average, noise.

    Args:
        hr: single-band NDVI on the fine grid.
        scale: downsampling factor r.
        blur_sigma: blur width in coarse pixels (sigma = blur_sigma * r fine
            pixels); 0 disables the blur.
        noise_sigma: standard deviation of the additive Gaussian noise.
        seed: noise seed.

    Raises:
        GridMismatchError: if the raster dimensions are not divisible by ``scale``.

    Returns:
        NDVI raster on the grid ``scale`` times coarser, clamped to [-1, 1]. A
        coarse pixel is nodata if any of its fine pixels is.
    """
    require_single_band(hr)
    if hr.height % scale != 0 or hr.width % scale != 0:
        raise GridMismatchError(
            f"Raster {hr.width}x{hr.height} is not divisible by the scale {scale}"
        )
    values = hr.values.astype(np.float64)
    if hr.nodata_mask.any():
        values = fill_nodata_nearest(values, hr.nodata_mask).astype(np.float64)
    if blur_sigma > 0:
        values = ndimage.gaussian_filter(
            values, sigma=blur_sigma * scale, mode="reflect"
        )
    coarse = _box_mean(values, scale)
    if noise_sigma > 0:
        noise = np.random.default_rng(seed).normal(0.0, noise_sigma, coarse.shape)
        coarse = coarse + noise
    invalid = _box_mean(hr.nodata_mask.astype(np.float64), scale) > 0
    return Raster(
        data=np.clip(coarse, -1.0, 1.0),
        nodata_mask=invalid,
        geo=hr.geo.scaled(scale),
        nodata_value=hr.nodata_value,
    )


def voronoi_parcels(size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Index of the nearest of ``count`` random seeds for every pixel center."""
    seeds = rng.uniform(0.0, size, size=(count, 2))
    rows, cols = np.mgrid[0:size, 0:size] + 0.5
    _, nearest = cKDTree(seeds).query(np.column_stack([rows.ravel(), cols.ravel()]))
    return np.asarray(nearest, dtype=np.int64).reshape(size, size)


def _smooth_noise(
    rng: np.random.Generator, shape: Tuple[int, int], sigma: float, std: float
) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    return field * (std / max(float(field.std()), 1e-12))


def narrow_strips(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Mask of axis-aligned strips a few fine pixels wide."""
    size = spec.hr_size
    strips = np.zeros((size, size), dtype=bool)
    for _ in range(spec.narrow_feature_count):
        vertical = bool(rng.integers(2))
        width = int(rng.integers(spec.strip_width_min, spec.strip_width_max + 1))
        length = int(rng.integers(size // 4, size // 2 + 1))
        across = int(rng.integers(0, size - width + 1))
        along = int(rng.integers(0, size - length + 1))
        if vertical:
            strips[along : along + length, across : across + width] = True
        else:
            strips[across : across + width, along : along + length] = True
    return strips


def cloud_quality(
    shape: Tuple[int, int],
    geo: GeoTransform,
    cloud_fraction: float,
    rng: np.random.Generator,
) -> QualityMask:
    """Cloud blobs covering ``cloud_fraction`` of the grid, with offset shadows."""
    quality = QualityMask.clear(shape[0], shape[1], geo)
    if cloud_fraction <= 0:
        return quality
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=max(shape) / 32)
    cloud = field > np.quantile(field, 1.0 - cloud_fraction)
    dy, dx = SHADOW_OFFSET
    shadow = np.zeros_like(cloud)
    shadow[dy:, dx:] = cloud[:-dy, :-dx]
    return quality.with_flag(QualityFlag.CLOUD, cloud).with_flag(
        QualityFlag.SHADOW, shadow & ~cloud
    )


def _band_product(
    ndvi: Raster,
    quality: QualityMask,
    rng: np.random.Generator,
    shift: Tuple[float, float] = (0.0, 0.0),
) -> Tuple[Raster, QualityMask]:
    """(red, NIR) reflectances whose NDVI is ``ndvi``, contaminated per ``quality``."""
    brightness = rng.uniform(0.3, 0.5, size=ndvi.shape)
    values = ndvi.values.astype(np.float64)
    bands = ndvi.replace(
        data=np.stack(
            [brightness * (1.0 - values) / 2, brightness * (1.0 + values) / 2]
        )
    )
    bands = shift_raster(bands, *shift)
    red, nir = bands.data.astype(np.float64)

    cloud = quality.has(QualityFlag.CLOUD)
    shadow = quality.has(QualityFlag.SHADOW)
    glare = quality.has(QualityFlag.WATER_GLARE)
    red = np.where(cloud, CLOUD_REFLECTANCE[0], red)
    nir = np.where(cloud, CLOUD_REFLECTANCE[1], nir)
    red = np.where(shadow, red * SHADOW_ATTENUATION, red)
    nir = np.where(shadow, nir * SHADOW_ATTENUATION, nir)
    red = np.where(glare, GLARE_REFLECTANCE[0], red)
    nir = np.where(glare, GLARE_REFLECTANCE[1], nir)

    quality = quality.with_flag(QualityFlag.NODATA, bands.nodata_mask)
    return bands.replace(data=np.stack([red, nir])), quality


def generate_scene(spec: SceneSpec) -> SceneBundle:
    """
    Generate a scene bundle; pure function of ``spec``.

    Parcels get a healthy pre-flood NDVI; the flood lowers the NDVI of the hit
    cropland parcels (above the Full threshold, or within the Partial band)
    and of the narrow strips lying on cropland.
    """
    rng = np.random.default_rng(spec.seed)
    size, scale = spec.hr_size, spec.scale
    shape = (size, size)
    hr_geo = spec.hr_geo

    parcel_ids = voronoi_parcels(size, spec.parcel_count, rng)
    is_crop = rng.random(spec.parcel_count) < spec.cropland_fraction
    cropland = is_crop[parcel_ids]

    crop_index = np.flatnonzero(is_crop)
    n_damaged = int(round(spec.damage_fraction * crop_index.size))
    damaged = rng.choice(crop_index, size=n_damaged, replace=False)
    partial = rng.random(n_damaged) < spec.partial_share
    parcel_class = np.full(spec.parcel_count, int(DamageLabel.NO))
    parcel_class[damaged] = np.where(partial, DamageLabel.PARTIAL, DamageLabel.FULL)

    n = spec.parcel_count
    drops = np.select(
        [parcel_class == DamageLabel.FULL, parcel_class == DamageLabel.PARTIAL],
        [rng.uniform(*FULL_DROP, n), rng.uniform(*PARTIAL_DROP, n)],
        rng.uniform(*STABLE_DRIFT, n),
    )
    pre = rng.uniform(*HEALTHY_NDVI, n)[parcel_ids] + _smooth_noise(
        rng, shape, 4.0, PRE_TEXTURE_STD
    )
    change = np.clip(
        _smooth_noise(rng, shape, 2.0, CHANGE_TEXTURE_STD),
        -CHANGE_TEXTURE_LIMIT,
        CHANGE_TEXTURE_LIMIT,
    )
    post = pre - drops[parcel_ids] + change
    strips = narrow_strips(spec, rng) & cropland
    post = np.where(strips, pre - STRIP_DROP, post)

    pre_hr = Raster.from_array(np.clip(pre, -1.0, 1.0), hr_geo)
    post_hr = Raster.from_array(np.clip(post, -1.0, 1.0), hr_geo)
    truth = derive_labels(delta_ndvi(pre_hr, post_hr), ThresholdConfig())

    pre_seed, post_seed = (int(s) for s in rng.integers(0, 2**32, size=2))
    pre_lr = degrade_to_lr(pre_hr, scale, spec.blur_sigma, spec.noise_sigma, pre_seed)
    post_lr = degrade_to_lr(
        post_hr, scale, spec.blur_sigma, spec.noise_sigma, post_seed
    )
    lr_geo = pre_lr.geo
    lr_shape = pre_lr.shape

    pre_quality = cloud_quality(lr_shape, lr_geo, spec.cloud_fraction, rng)
    post_quality = cloud_quality(lr_shape, lr_geo, spec.cloud_fraction, rng)
    if spec.water_glare_fraction > 0:
        flooded = _box_mean((parcel_class[parcel_ids] == DamageLabel.FULL) * 1.0, scale)
        specks = rng.random(lr_shape) < spec.water_glare_fraction
        post_quality = post_quality.with_flag(
            QualityFlag.WATER_GLARE, (flooded >= 0.5) & specks
        )
    pre_bands, pre_quality = _band_product(pre_lr, pre_quality, rng)
    post_bands, post_quality = _band_product(
        post_lr,
        post_quality,
        rng,
        shift=(spec.misregistration_dx, spec.misregistration_dy),
    )

    logger.info(
        f"Generated scene seed={spec.seed}: {n} parcels, {crop_index.size} cropland, "
        f"{n_damaged} damaged, {int(strips.sum())} strip pixels."
    )
    return SceneBundle(
        spec=spec,
        pre_hr=pre_hr,
        post_hr=post_hr,
        pre_lr=pre_lr,
        post_lr=post_lr,
        pre_bands=pre_bands,
        post_bands=post_bands,
        pre_quality=pre_quality,
        post_quality=post_quality,
        cropland=boolean_raster(_box_mean(cropland * 1.0, scale) >= 0.5, lr_geo),
        truth_labels=truth,
        parcel_ids=Raster.from_array(parcel_ids.astype(np.float32), hr_geo),
    )


def _manifest_text(spec: SceneSpec) -> str:
    entries: Dict[str, str] = {"format_version": str(MANIFEST_VERSION)}
    for key, value in spec.model_dump().items():
        entries[f"spec.{key}"] = repr(value)
    for name in BUNDLE_FILES:
        entries[f"file.{name}"] = f"{name}.fr1"
    return "".join(f"{key}={entries[key]}\n" for key in sorted(entries))


def _parse_manifest(text: str) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputFileError(
                f"Manifest line {line_number} is not key=value: {line}"
            )
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def save_bundle(bundle: SceneBundle, directory: PathLike) -> None:
    """
    Write a bundle as a directory of FR1 files plus ``manifest.txt``.

    The directory is replaced atomically; equal bundles give byte-identical
    directories.
    """
    with atomic_directory(directory) as tmp_dir:
        for name, raster in bundle.rasters():
            write_raster(raster, tmp_dir / f"{name}.fr1")
        (tmp_dir / MANIFEST_NAME).write_text(_manifest_text(bundle.spec))
    logger.info(f'Saved scene seed={bundle.spec.seed} to "{directory}".')


def load_bundle(directory: PathLike) -> SceneBundle:
    """
    Read a bundle written by save_bundle.

    Raises:
        InputFileError: if the directory, the manifest or a member file is missing.
    """
    directory = ensure_input_directory(directory)
    entries = _parse_manifest(ensure_input_file(directory / MANIFEST_NAME).read_text())
    spec = SceneSpec(
        **{
            key[len("spec.") :]: value
            for key, value in entries.items()
            if key.startswith("spec.")
        }
    )
    members: Dict[str, object] = {}
    for name in BUNDLE_FILES:
        raster = read_raster(
            Path(directory) / entries.get(f"file.{name}", f"{name}.fr1")
        )
        members[name] = (
            QualityMask.from_raster(raster) if name.endswith("_quality") else raster
        )
    return SceneBundle(spec=spec, **members)  # type: ignore[arg-type]
