"""
Pipeline steps shared by the command-line tools: preprocessing of band
products, labeling, scene splits, training on scene sets and evaluation.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from attr import define

from .change_detection import delta_ndvi, derive_labels
from .config import PipelineConfig
from .edsr import Edsr, build_edsr, infer_sr, make_sr_dataset, train_edsr
from .errors import FloodDamageError
from .masking import apply_masks, ndvi_from_bands
from .raster import QualityMask, Raster, require_cogridded
from .registration import RegistrationResult, coregister_translation
from .report import MetricRow, segmentation_rows, sr_quality_rows
from .resampling import ResamplingMethod, resample_like, upsample
from .synthdata import SceneBundle
from .training import TrainingResult
from .unet import Unet, build_unet, make_seg_dataset, predict_damage, train_unet

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

T = TypeVar("T")

MODALITIES = ("lr", "sr", "hr")


@define(frozen=True)
class PreprocessResult:
    """
    Attributes:
        pre: masked pre-flood NDVI.
        post: masked post-flood NDVI, aligned with ``pre``.
        registration: correction applied to the post-flood image.
    """

    pre: Raster
    post: Raster
    registration: RegistrationResult


def _flagged(ndvi: Raster, quality: QualityMask) -> Raster:
    return ndvi.replace(nodata_mask=ndvi.nodata_mask | quality.invalid)


def preprocess_pair(
    pre_bands: Raster,
    post_bands: Raster,
    pre_quality: QualityMask,
    post_quality: QualityMask,
    cropland: Raster,
    max_shift: int = 8,
    red_band: int = 0,
    nir_band: int = 1,
) -> PreprocessResult:
    """
    NDVI of both dates, quality masking, translation co-registration of the
    post-flood image onto the pre-flood one, then cropland masking.

    Args:
        pre_bands: pre-flood multi-band product.
        post_bands: post-flood multi-band product on the same grid.
        pre_quality: quality flags of ``pre_bands``.
        post_quality: quality flags of ``post_bands``.
        cropland: boolean cropland raster; resampled (nearest) to the image
            grid when it comes on another grid.
        max_shift: co-registration search radius in pixels.
        red_band: index of the red band.
        nir_band: index of the near-infrared band.

    Raises:
        GridMismatchError: if the products or their masks are not co-gridded.
        RegistrationError: if the images cannot be co-registered.
    """
    require_cogridded(pre_bands, post_bands)
    pre = _flagged(ndvi_from_bands(pre_bands, red_band, nir_band), pre_quality)
    post = _flagged(ndvi_from_bands(post_bands, red_band, nir_band), post_quality)

    registration = coregister_translation(pre, post, max_shift)
    aligned = registration.apply(post)

    if not cropland.is_cogridded(pre):
        cropland = resample_like(cropland, pre, ResamplingMethod.NEAREST)
    clear = QualityMask.clear(pre.height, pre.width, pre.geo)
    return PreprocessResult(
        pre=apply_masks(pre, clear, cropland),
        post=apply_masks(aligned, clear, cropland),
        registration=registration,
    )


def label_pair(pre: Raster, post: Raster, config: PipelineConfig) -> Raster:
    """Rule-based damage labels of an NDVI pair."""
    return derive_labels(delta_ndvi(pre, post), config.thresholds, config.smooth_window)


def split_by_scene(items: Sequence[T], val_fraction: float) -> Tuple[List[T], List[T]]:
    """
    Hold out the last scenes for validation (at least one on each side).

    Raises:
        FloodDamageError: with fewer than two scenes.
    """
    if len(items) < 2:
        raise FloodDamageError("At least two scenes are needed for a train/val split.")
    n_val = min(len(items) - 1, max(1, math.ceil(len(items) * val_fraction)))
    return list(items[:-n_val]), list(items[-n_val:])


def train_sr_on_scenes(
    scenes: Sequence[SceneBundle], config: PipelineConfig
) -> Tuple[Edsr, TrainingResult]:
    """Train the SR network on whole-scene train / validation splits."""
    train_scenes, val_scenes = split_by_scene(scenes, config.val_fraction)
    train_pairs, val_pairs = (
        make_sr_dataset(
            subset,
            config.scale,
            config.sr_chip,
            max_nodata_fraction=config.max_nodata_fraction,
        )
        for subset in (train_scenes, val_scenes)
    )
    model = build_edsr(config.edsr, seed=config.seed)
    return train_edsr(train_pairs, val_pairs, config.edsr, config.sr_schedule, model)


def _seg_pairs(scenes: Sequence[SceneBundle]) -> List[Tuple[Raster, Raster]]:
    return [(delta_ndvi(s.pre_hr, s.post_hr), s.truth_labels) for s in scenes]


def train_seg_on_scenes(
    scenes: Sequence[SceneBundle], config: PipelineConfig
) -> Tuple[Unet, TrainingResult]:
    """Train the segmentation network on clean HR delta NDVI of whole scenes."""
    train_scenes, val_scenes = split_by_scene(scenes, config.val_fraction)
    train_samples, val_samples = (
        make_seg_dataset(
            _seg_pairs(subset),
            config.seg_chip,
            max_nodata_fraction=config.max_nodata_fraction,
        )
        for subset in (train_scenes, val_scenes)
    )
    model = build_unet(config.unet, seed=config.seed)
    return train_unet(
        train_samples, val_samples, config.unet, config.seg_schedule, model
    )


def modality_deltas(
    scene: SceneBundle, sr_model: Optional[Edsr], config: PipelineConfig
) -> Dict[str, Raster]:
    """
    Delta NDVI of a scene on the HR grid from each input modality:
    nearest-upsampled LR, super-resolved LR (when a model is given) and
    native HR.
    """
    deltas = {
        "lr": delta_ndvi(
            upsample(scene.pre_lr, config.scale, ResamplingMethod.NEAREST),
            upsample(scene.post_lr, config.scale, ResamplingMethod.NEAREST),
        ),
        "hr": delta_ndvi(scene.pre_hr, scene.post_hr),
    }
    if sr_model is not None:
        deltas["sr"] = delta_ndvi(
            infer_sr(sr_model, scene.pre_lr, config.sr_tile, config.sr_overlap),
            infer_sr(sr_model, scene.post_lr, config.sr_tile, config.sr_overlap),
        )
    return {m: deltas[m] for m in MODALITIES if m in deltas}


def compare_input_modalities(
    scenes: Sequence[SceneBundle],
    seg_model: Unet,
    sr_model: Optional[Edsr],
    config: PipelineConfig,
) -> List[MetricRow]:
    """
    Run the same segmentation model on the delta NDVI of every modality.

    Returns:
        per-scene rows (scope "scene-<seed>/seg/<modality>") evaluated on the
        cropland pixels, followed by the per-modality means over the scenes
        of the class-wise and macro F1 (scope "seg/<modality>").
    """
    rows: List[MetricRow] = []
    per_modality: Dict[str, List[List[MetricRow]]] = {}
    for scene in scenes:
        region = scene.cropland_hr()
        for modality, delta in modality_deltas(scene, sr_model, config).items():
            prediction = predict_damage(
                seg_model,
                delta,
                config.seg_tile,
                config.seg_overlap,
                config.min_size,
            )
            scene_rows = segmentation_rows(
                f"scene-{scene.spec.seed}/seg/{modality}",
                scene.truth_labels,
                prediction,
                region,
            )
            rows.extend(scene_rows)
            per_modality.setdefault(modality, []).append(scene_rows)

    for modality, scene_rows_list in per_modality.items():
        means: Dict[str, float] = {}
        for metric in ("f1_no", "f1_partial", "f1_full", "macro_f1"):
            matching = [r for s in scene_rows_list for r in s if r.metric == metric]
            means[metric] = float(np.mean([r.value for r in matching]))
            rows.append(
                MetricRow(
                    f"seg/{modality}",
                    metric,
                    means[metric],
                    sum(r.pixel_count for r in matching),
                )
            )
        logger.info(
            f"Modality {modality}: mean Full-damage F1 {means['f1_full']:.4f}, "
            f"macro F1 {means['macro_f1']:.4f} over {len(scene_rows_list)} scenes."
        )
    return rows


def evaluate_sr_on_scenes(
    scenes: Sequence[SceneBundle], sr_model: Edsr, config: PipelineConfig
) -> List[MetricRow]:
    """
    PSNR / SSIM of the super-resolved pre- and post-flood NDVI of every
    scene against the HR reference, with the bicubic baseline.
    """
    rows: List[MetricRow] = []
    for scene in scenes:
        for event in ("pre", "post"):
            lr: Raster = getattr(scene, f"{event}_lr")
            hr: Raster = getattr(scene, f"{event}_hr")
            rows.extend(
                sr_quality_rows(
                    f"scene-{scene.spec.seed}/sr/{event}",
                    infer_sr(sr_model, lr, config.sr_tile, config.sr_overlap),
                    hr,
                    config.ssim,
                    baseline=upsample(lr, config.scale, ResamplingMethod.BICUBIC),
                )
            )
    return rows
