"""
Encoder-decoder segmentation network mapping delta NDVI to per-pixel
damage-class logits, with its training data and tiled inference.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from attr import define
from pydantic import BaseModel, Field, field_validator

from .change_detection import N_CLASSES, DamageLabel, small_object_removal
from .chips import extract_chips
from .functional import concat_channels, max_pool2d, relu, upsample_nearest
from .losses import cross_entropy_loss
from .masking import fill_nodata_nearest
from .metrics import confusion_from_arrays, f1_scores
from .nn import Conv2d, Module, ModuleList
from .raster import Raster, RasterKind, require_single_band
from .tensor import Tensor, no_grad
from .tiling import TileBlender, iter_tiles
from .training import TrainingResult, TrainSchedule, run_training

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_SEG_CHIP = 256
DEFAULT_FOCAL_GAMMA = 2.0


class UnetConfig(BaseModel):
    """
    Attributes:
        depth: number of pooling stages.
        base_channels: channels of the first stage, doubled at every stage.
        in_channels: input channels (1 for delta NDVI).
        n_classes: output classes.
        class_weighting: weight the loss by inverse class frequencies of the
            training split (ignored when class_weights is given).
        class_weights: explicit per-class loss weights.
        focal: use the focal variant of the loss.
        focal_gamma: focusing parameter of the focal loss (2.0 when focal
            is set and no value is given).
    """

    depth: int = Field(default=4, ge=1)
    base_channels: int = Field(default=32, ge=1)
    in_channels: int = Field(default=1, ge=1)
    n_classes: int = Field(default=N_CLASSES, ge=2)
    class_weighting: bool = False
    class_weights: Optional[Tuple[float, ...]] = None
    focal: bool = False
    focal_gamma: Optional[float] = Field(default=None, ge=0)

    @field_validator("class_weights")
    @classmethod
    def _positive_weights(
        cls, value: Optional[Tuple[float, ...]]
    ) -> Optional[Tuple[float, ...]]:
        if value is not None and any(w < 0 for w in value):
            raise ValueError(f"Class weights must be >= 0, got {value}")
        return value

    @property
    def loss_gamma(self) -> Optional[float]:
        """Focusing parameter passed to the loss; None for plain cross-entropy."""
        if self.focal_gamma is not None:
            return self.focal_gamma
        return DEFAULT_FOCAL_GAMMA if self.focal else None

    @property
    def size_multiple(self) -> int:
        """Input sizes must be multiples of this."""
        return 2**self.depth

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level


def _conv_count(c_in: int, c_out: int, kernel: int = 3) -> int:
    return c_in * c_out * kernel * kernel + c_out


def unet_parameter_count(config: UnetConfig) -> int:
    """Closed-form number of parameters of build_unet(config)."""
    total = 0
    c_in = config.in_channels
    for level in range(config.depth):
        c = config.channels(level)
        total += _conv_count(c_in, c) + _conv_count(c, c)
        c_in = c
    bottom = config.channels(config.depth)
    total += _conv_count(c_in, bottom) + _conv_count(bottom, bottom)
    for level in range(config.depth):
        c = config.channels(level)
        total += _conv_count(2 * c, c) + _conv_count(2 * c, c) + _conv_count(c, c)
    total += _conv_count(config.channels(0), config.n_classes, kernel=1)
    return total


class DoubleConv(Module):
    """conv-relu-conv-relu"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:  # type: ignore[override]
        return relu(self.conv2(relu(self.conv1(x))))


class Unet(Module):
    """
    Encoder: depth x [double conv, 2x2 max pool]; bottleneck double conv;
    decoder: depth x [nearest upsample x2, conv, concatenation of the skip,
    double conv]; 1x1 conv to the class logits.

    Input (B, C_in, H, W) with H, W multiples of 2^depth; output
    (B, n_classes, H, W).
    """

    def __init__(self, config: UnetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        self.encoders = ModuleList()
        c_in = config.in_channels
        for level in range(config.depth):
            self.encoders.append(DoubleConv(c_in, config.channels(level), rng))
            c_in = config.channels(level)
        self.bottleneck = DoubleConv(c_in, config.channels(config.depth), rng)
        self.up_convs = ModuleList()
        self.decoders = ModuleList()
        for level in reversed(range(config.depth)):
            c = config.channels(level)
            self.up_convs.append(Conv2d(2 * c, c, 3, rng))
            self.decoders.append(DoubleConv(2 * c, c, rng))
        self.classifier = Conv2d(config.channels(0), config.n_classes, 1, rng)

    def forward(self, x: Tensor) -> Tensor:  # type: ignore[override]
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = max_pool2d(x, 2)
        x = self.bottleneck(x)
        for up_conv, decoder, skip in zip(
            self.up_convs, self.decoders, reversed(skips)
        ):
            x = up_conv(upsample_nearest(x, 2))
            x = decoder(concat_channels(x, skip))
        return self.classifier(x)


def build_unet(config: Optional[UnetConfig] = None, seed: int = 0) -> Unet:
    config = UnetConfig() if config is None else config
    model = Unet(config, seed=seed)
    logger.debug(f"Built UNet with {model.num_parameters()} parameters.")
    return model


@define(frozen=True)
class SegSample:
    """
    Attributes:
        delta: delta NDVI chip (h, w), nodata filled with the nearest value.
        labels: damage classes (h, w), 0 at invalid pixels.
        valid: pixels entering the loss and the metrics.
    """

    delta: np.ndarray
    labels: np.ndarray
    valid: np.ndarray


def make_seg_dataset(
    raster_pairs: Sequence[Tuple[Raster, Raster]],
    chip: int = DEFAULT_SEG_CHIP,
    stride: Optional[int] = None,
    max_nodata_fraction: float = 0.0,
) -> List[SegSample]:
    """
    Cut aligned (delta NDVI, label) chips.

    Args:
        raster_pairs: co-gridded (delta, labels) rasters.
        chip: chip size, a multiple of 2^depth for training.
        stride: step between chips (default: chip).
        max_nodata_fraction: largest nodata fraction accepted in either chip.
    """
    stride = chip if stride is None else stride
    samples: List[SegSample] = []
    for delta, labels in raster_pairs:
        require_single_band(delta, labels)
        for record in extract_chips([delta, labels], chip, stride, max_nodata_fraction):
            delta_chip, label_chip = record.rasters
            valid = delta_chip.valid_mask & label_chip.valid_mask
            samples.append(
                SegSample(
                    delta=fill_nodata_nearest(
                        delta_chip.values, delta_chip.nodata_mask
                    ),
                    labels=np.where(valid, np.rint(label_chip.values), 0).astype(
                        np.int64
                    ),
                    valid=valid,
                )
            )
    logger.info(f"Built {len(samples)} segmentation chips.")
    return samples


def inverse_frequency_weights(
    samples: Sequence[SegSample], n_classes: int = N_CLASSES
) -> Tuple[float, ...]:
    """w_c = N / (n_classes * N_c) over the valid pixels; 0 for absent classes."""
    counts = np.zeros(n_classes, dtype=np.int64)
    for sample in samples:
        counts += np.bincount(sample.labels[sample.valid], minlength=n_classes)[
            :n_classes
        ]
    total = counts.sum()
    weights = np.where(counts > 0, total / (n_classes * np.maximum(counts, 1)), 0.0)
    return tuple(float(w) for w in weights)


def collate_seg(batch: Sequence[SegSample]) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    delta = np.stack([s.delta for s in batch])[:, np.newaxis]
    labels = np.stack([s.labels for s in batch])
    valid = np.stack([s.valid for s in batch])
    return Tensor(delta), labels, valid


def predict_samples(model: Unet, samples: Sequence[SegSample]) -> List[np.ndarray]:
    """Argmax class maps of chips."""
    predictions = []
    with no_grad():
        for sample in samples:
            logits = model(Tensor(sample.delta[np.newaxis, np.newaxis])).data[0]
            predictions.append(logits.argmax(axis=0))
    return predictions


def samples_f1(model: Unet, samples: Sequence[SegSample]) -> Dict[str, float]:
    """Class-wise F1 pooled over the valid pixels of the chips."""
    predictions = predict_samples(model, samples)
    cm = confusion_from_arrays(
        np.concatenate([s.labels.ravel() for s in samples]),
        np.concatenate([p.ravel() for p in predictions]),
        np.concatenate([s.valid.ravel() for s in samples]),
        n_classes=model.config.n_classes,
    )
    scores = f1_scores(cm)
    metrics = {
        f"f1_{DamageLabel(c).name.lower()}": scores.f1[c]
        for c in range(min(len(scores.f1), N_CLASSES))
    }
    metrics["macro_f1"] = scores.macro_f1
    return metrics


def train_unet(
    train_samples: Sequence[SegSample],
    val_samples: Sequence[SegSample],
    config: UnetConfig,
    schedule: TrainSchedule,
    model: Optional[Unet] = None,
) -> Tuple[Unet, TrainingResult]:
    """
    Train the segmentation network with (weighted, optionally focal)
    cross-entropy, logging the class-wise validation F1 every epoch.

    Returns:
        Tuple: the model holding the best parameters and the training result.
    """
    model = build_unet(config, seed=schedule.seed) if model is None else model
    weights = config.class_weights
    if weights is None and config.class_weighting:
        weights = inverse_frequency_weights(train_samples, config.n_classes)
        logger.info(f"Inverse-frequency class weights: {weights}.")

    def loss_fn(m: Module, batch: Sequence[SegSample]) -> Tensor:
        inputs, labels, valid = collate_seg(batch)
        return cross_entropy_loss(
            m(inputs),
            labels,
            class_weights=weights,
            focal_gamma=config.loss_gamma,
            valid_mask=valid,
        )

    def validate(_: Module) -> Dict[str, float]:
        return samples_f1(model, val_samples)

    logger.info(
        f"Training UNet on {len(train_samples)} chips ({len(val_samples)} validation)."
    )
    result = run_training(
        model, train_samples, val_samples, loss_fn, schedule, validate
    )
    return model, result


def predict_logits(
    model: Unet, delta: Raster, tile: int = 256, overlap: int = 32
) -> np.ndarray:
    """
    Class logits of a full delta NDVI raster, shape (n_classes, H, W).

    The raster is reflect-padded to a multiple of 2^depth and processed in
    overlapping tiles aligned on that multiple; logits of overlapping tiles
    are averaged.
    """
    require_single_band(delta)
    multiple = model.config.size_multiple
    if tile % multiple:
        raise ValueError(f"Tile size {tile} must be a multiple of {multiple}")
    height, width = delta.shape
    values = fill_nodata_nearest(delta.values, delta.nodata_mask)
    pad_h = -height % multiple
    pad_w = -width % multiple
    padded = np.pad(values, ((0, pad_h), (0, pad_w)), mode="reflect")
    padded_h, padded_w = padded.shape

    blender = TileBlender(model.config.n_classes, padded_h, padded_w)
    with no_grad():
        for row, col in iter_tiles(padded_h, padded_w, tile, overlap, align=multiple):
            window = padded[row : row + tile, col : col + tile]
            logits = model(Tensor(window[np.newaxis, np.newaxis])).data[0]
            blender.add(logits, row, col, np.ones(window.shape))
    return blender.result()[:, :height, :width]


def predict_damage(
    model: Unet,
    delta: Raster,
    tile: int = 256,
    overlap: int = 32,
    min_size: Optional[int] = 10,
) -> Raster:
    """
    Damage-label raster from delta NDVI.

    Per-pixel argmax of the tile-averaged logits (first class wins ties),
    nodata propagated from the input, then small-object removal.

    Args:
        model: trained network.
        delta: single-band delta NDVI raster.
        tile: tile size, a multiple of 2^depth.
        overlap: overlap between tiles.
        min_size: small-object threshold; None disables the removal.
    """
    logits = predict_logits(model, delta, tile, overlap)
    labels = logits.argmax(axis=0).astype(np.float32)
    raster = delta.replace(data=labels, kind=RasterKind.LABELS)
    if min_size is not None:
        raster = small_object_removal(raster, min_size)
    return raster
