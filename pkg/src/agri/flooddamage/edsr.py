"""
Single-band NDVI super-resolution network (residual blocks, no batch
normalization, channel-to-space upsampling), its training data and tiled
full-raster inference.
"""

import logging
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from attr import define
from pydantic import BaseModel, Field, field_validator

from .chips import chip_origins
from .errors import GridMismatchError, ShapeError
from .functional import add, pixel_shuffle, relu
from .functional import scale as scale_tensor
from .losses import l1_loss
from .masking import fill_nodata_nearest
from .metrics import psnr
from .nn import Conv2d, Module, ModuleList
from .raster import GeoTransform, Raster, require_single_band
from .resampling import ResamplingMethod, resample, upsample
from .tensor import Tensor, no_grad
from .tiling import TileBlender, feather_weights, iter_tiles
from .training import TrainingResult, TrainSchedule, run_training

if TYPE_CHECKING:
    from .synthdata import SceneBundle

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_SR_CHIP = 192


class EdsrConfig(BaseModel):
    n_resblocks: int = Field(default=16, ge=1)
    n_feats: int = Field(default=64, ge=1)
    scale: int = Field(default=3, ge=2)
    residual_scale: float = Field(default=1.0, gt=0)
    kernel: int = Field(default=3, ge=1)

    @field_validator("kernel")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 != 1:
            raise ValueError(f"Kernel size must be odd, got {value}")
        return value


def edsr_parameter_count(config: EdsrConfig) -> int:
    """Closed-form number of parameters of build_edsr(config)."""
    f, k, r = config.n_feats, config.kernel, config.scale
    head = f * k * k + f
    block = 2 * (f * f * k * k + f)
    body = f * f * k * k + f
    upsampler = f * f * r * r * k * k + f * r * r
    tail = f * k * k + 1
    return head + config.n_resblocks * block + body + upsampler + tail


class ResidualBlock(Module):
    def __init__(
        self, n_feats: int, kernel: int, residual_scale: float, rng: np.random.Generator
    ):
        super().__init__()
        self.conv1 = Conv2d(n_feats, n_feats, kernel, rng)
        self.conv2 = Conv2d(n_feats, n_feats, kernel, rng)
        self.residual_scale = residual_scale

    def forward(self, x: Tensor) -> Tensor:  # type: ignore[override]
        residual = self.conv2(relu(self.conv1(x)))
        if self.residual_scale != 1.0:
            residual = scale_tensor(residual, self.residual_scale)
        return add(x, residual)


class Edsr(Module):
    """
    head conv(1 -> F) -> n residual blocks -> body conv -> global skip ->
    conv(F -> F r^2) -> pixel shuffle(r) -> conv(F -> 1).

    Input (B, 1, H, W), output (B, 1, rH, rW).
    """

    def __init__(self, config: EdsrConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        f, k, r = config.n_feats, config.kernel, config.scale
        self.head = Conv2d(1, f, k, rng)
        self.blocks = ModuleList(
            [
                ResidualBlock(f, k, config.residual_scale, rng)
                for _ in range(config.n_resblocks)
            ]
        )
        self.body = Conv2d(f, f, k, rng)
        self.upsampler = Conv2d(f, f * r * r, k, rng)
        self.tail = Conv2d(f, 1, k, rng)

    def forward(self, x: Tensor) -> Tensor:  # type: ignore[override]
        head = self.head(x)
        features = head
        for block in self.blocks:
            features = block(features)
        features = add(self.body(features), head)
        features = pixel_shuffle(self.upsampler(features), self.config.scale)
        return self.tail(features)


def build_edsr(config: Optional[EdsrConfig] = None, seed: int = 0) -> Edsr:
    config = EdsrConfig() if config is None else config
    model = Edsr(config, seed=seed)
    logger.debug(f"Built EDSR with {model.num_parameters()} parameters.")
    return model


@define(frozen=True)
class SrPair:
    """
    One training sample.

    Attributes:
        lr: LR chip (h, w), nodata filled with the nearest valid value.
        hr: HR target chip (r h, r w).
        valid: HR-grid mask of the pixels entering the loss.
    """

    lr: np.ndarray
    hr: np.ndarray
    valid: np.ndarray


def check_sr_grids(lr: Raster, hr: Raster, scale: int) -> None:
    """
    Raises:
        GridMismatchError: unless the LR grid is exactly ``scale`` times
            coarser than the HR grid with the same origin and extent.
    """
    expected = hr.geo.scaled(scale)
    same_geo = np.allclose(
        lr.geo.to_coefficients(), expected.to_coefficients(), rtol=1e-9, atol=1e-9
    )
    if not same_geo or lr.width * scale != hr.width or lr.height * scale != hr.height:
        raise GridMismatchError(
            f"LR grid {lr.width}x{lr.height} {lr.geo} is not {scale}x coarser than "
            f"HR grid {hr.width}x{hr.height} {hr.geo}; resample it with "
            "prepare_lr_grid first."
        )


def _upsampled_mask(mask: np.ndarray, scale: int) -> np.ndarray:
    return mask.repeat(scale, axis=0).repeat(scale, axis=1)


def make_sr_pairs(
    raster_pairs: Sequence[Tuple[Raster, Raster]],
    scale: int,
    chip: int = DEFAULT_SR_CHIP,
    stride: Optional[int] = None,
    max_nodata_fraction: float = 0.0,
) -> List[SrPair]:
    """
    Cut aligned (LR, HR) chips covering identical ground footprints.

    Args:
        raster_pairs: (LR, HR) raster pairs, LR exactly ``scale`` times coarser.
        scale: SR factor r.
        chip: HR chip size; must be divisible by r.
        stride: HR stride (default: chip); must be divisible by r.
        max_nodata_fraction: largest nodata fraction accepted in either chip.

    Raises:
        GridMismatchError: for misaligned grids or chip / stride sizes not
            divisible by r.
    """
    stride = chip if stride is None else stride
    if chip % scale or stride % scale:
        raise GridMismatchError(
            f"HR chip {chip} and stride {stride} must be divisible by the SR scale "
            f"{scale}; pre-resample the LR raster with prepare_lr_grid and pick a "
            "divisible chip size."
        )
    lr_chip = chip // scale
    pairs: List[SrPair] = []
    for lr, hr in raster_pairs:
        require_single_band(lr, hr)
        check_sr_grids(lr, hr, scale)
        for row in chip_origins(hr.height, chip, stride):
            for col in chip_origins(hr.width, chip, stride):
                hr_window = hr.window(col, row, chip, chip)
                lr_window = lr.window(col // scale, row // scale, lr_chip, lr_chip)
                if (
                    hr_window.nodata_fraction() > max_nodata_fraction
                    or lr_window.nodata_fraction() > max_nodata_fraction
                ):
                    continue
                valid = hr_window.valid_mask & ~_upsampled_mask(
                    lr_window.nodata_mask, scale
                )
                pairs.append(
                    SrPair(
                        lr=fill_nodata_nearest(lr_window.values, lr_window.nodata_mask),
                        hr=np.array(hr_window.values, dtype=np.float32),
                        valid=valid,
                    )
                )
    logger.info(f"Built {len(pairs)} SR pairs from {len(raster_pairs)} raster pairs.")
    return pairs


def make_sr_dataset(
    scenes: Sequence["SceneBundle"],
    scale: int,
    chip: int = DEFAULT_SR_CHIP,
    stride: Optional[int] = None,
    images: Sequence[str] = ("pre", "post"),
    max_nodata_fraction: float = 0.0,
) -> List[SrPair]:
    """SR pairs from the LR / HR NDVI rasters of scene bundles (see make_sr_pairs)."""
    raster_pairs = [
        (getattr(scene, f"{image}_lr"), getattr(scene, f"{image}_hr"))
        for scene in scenes
        for image in images
    ]
    return make_sr_pairs(raster_pairs, scale, chip, stride, max_nodata_fraction)


def collate_sr(batch: Sequence[SrPair]) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    lr = np.stack([p.lr for p in batch])[:, np.newaxis]
    hr = np.stack([p.hr for p in batch])[:, np.newaxis]
    valid = np.stack([p.valid for p in batch])[:, np.newaxis]
    return Tensor(lr), hr, valid


def sr_loss(model: Module, batch: Sequence[SrPair]) -> Tensor:
    inputs, targets, valid = collate_sr(batch)
    return l1_loss(model(inputs), targets, valid)


def predict_pairs(model: Edsr, pairs: Sequence[SrPair]) -> List[np.ndarray]:
    """Clamped SR predictions of the LR chips."""
    outputs = []
    with no_grad():
        for pair in pairs:
            out = model(Tensor(pair.lr[np.newaxis, np.newaxis])).data[0, 0]
            outputs.append(np.clip(out, -1.0, 1.0))
    return outputs


def pairs_psnr(predictions: Sequence[np.ndarray], pairs: Sequence[SrPair]) -> float:
    """PSNR pooled over all the valid pixels of the pairs."""
    pred = np.concatenate([p.ravel() for p in predictions])
    target = np.concatenate([p.hr.ravel() for p in pairs])
    valid = np.concatenate([p.valid.ravel() for p in pairs])
    return psnr(pred, target, valid_mask=valid)


def bicubic_predictions(pairs: Sequence[SrPair], scale: int) -> List[np.ndarray]:
    """Bicubic upsampling of the LR chips: the baseline SR has to beat."""
    outputs = []
    for pair in pairs:
        lr = Raster.from_array(pair.lr)
        up = upsample(lr, scale, ResamplingMethod.BICUBIC)
        outputs.append(np.clip(up.values, -1.0, 1.0))
    return outputs


def train_edsr(
    train_pairs: Sequence[SrPair],
    val_pairs: Sequence[SrPair],
    config: EdsrConfig,
    schedule: TrainSchedule,
    model: Optional[Edsr] = None,
) -> Tuple[Edsr, TrainingResult]:
    """
    Train the SR network with the masked L1 loss.

    Args:
        train_pairs: training chips.
        val_pairs: validation chips (from other scenes than the training ones).
        config: architecture.
        schedule: optimization schedule; the weights are initialized from
            ``schedule.seed``.
        model: optional model to continue training.

    Returns:
        Tuple: the model holding the best parameters and the training result.
    """
    model = build_edsr(config, seed=schedule.seed) if model is None else model

    def validate(_: Module) -> Dict[str, float]:
        return {"val_psnr": pairs_psnr(predict_pairs(model, val_pairs), val_pairs)}

    baseline = pairs_psnr(bicubic_predictions(val_pairs, config.scale), val_pairs)
    logger.info(
        f"Training EDSR on {len(train_pairs)} pairs "
        f"({len(val_pairs)} validation, bicubic PSNR {baseline:.2f} dB)."
    )
    result = run_training(model, train_pairs, val_pairs, sr_loss, schedule, validate)
    return model, result


def infer_sr(
    model: Edsr, lr_raster: Raster, tile: int = 64, overlap: int = 8
) -> Raster:
    """
    Super-resolve a full NDVI raster tile by tile.

    Overlapping predictions are blended with linear feathering over the
    overlap band; a raster smaller than one tile is padded (mirrored) to the
    tile size. Nodata input pixels are filled with the nearest valid value
    for the network, and the nodata mask, upsampled by nearest-neighbor, is
    applied to the output.

    Args:
        model: trained network.
        lr_raster: single-band NDVI raster.
        tile: tile size in LR pixels.
        overlap: overlap between tiles in LR pixels.

    Returns:
        NDVI raster with r times more pixels along each axis, same origin,
        pixel size divided by r, values clamped to [-1, 1].
    """
    require_single_band(lr_raster)
    r = model.config.scale
    height, width = lr_raster.shape
    values = fill_nodata_nearest(lr_raster.values, lr_raster.nodata_mask)
    padded = np.pad(
        values,
        ((0, max(0, tile - height)), (0, max(0, tile - width))),
        mode="symmetric",
    )
    padded_h, padded_w = padded.shape

    blender = TileBlender(1, padded_h * r, padded_w * r)
    n_tiles = 0
    with no_grad():
        for row, col in iter_tiles(padded_h, padded_w, tile, overlap):
            window = padded[row : row + tile, col : col + tile]
            out = model(Tensor(window[np.newaxis, np.newaxis])).data[0]
            weights = feather_weights(
                tile * r,
                tile * r,
                row * r,
                col * r,
                padded_h * r,
                padded_w * r,
                overlap * r,
            )
            blender.add(out, row * r, col * r, weights)
            n_tiles += 1
    logger.debug(f"SR inference over {n_tiles} tiles.")

    hr = np.clip(blender.result()[0, : height * r, : width * r], -1.0, 1.0)
    return Raster(
        data=hr,
        nodata_mask=_upsampled_mask(lr_raster.nodata_mask, r),
        geo=lr_raster.geo.refined(r),
        nodata_value=lr_raster.nodata_value,
    )


def prepare_lr_grid(
    lr: Raster,
    hr_geo: GeoTransform,
    hr_width: int,
    hr_height: int,
    scale: int,
    method: Union[str, ResamplingMethod] = ResamplingMethod.BILINEAR,
) -> Raster:
    """
    Resample a native LR raster onto the grid exactly ``scale`` times coarser
    than the target HR grid (10 m -> 9 m for a 3 m target and r = 3).

    Raises:
        GridMismatchError: if the HR dimensions are not divisible by ``scale``.
    """
    if hr_width % scale or hr_height % scale:
        raise GridMismatchError(
            f"HR grid {hr_width}x{hr_height} is not divisible by scale {scale}"
        )
    if scale < 2:
        raise ShapeError(f"SR scale must be >= 2, got {scale}")
    return resample(
        lr, hr_geo.scaled(scale), hr_width // scale, hr_height // scale, method
    )
