import numpy as np
import pytest

from agri.flooddamage.change_detection import ThresholdConfig, threshold_label
from agri.flooddamage.raster import GeoTransform, Raster, RasterKind
from agri.flooddamage.tensor import Tensor, no_grad
from agri.flooddamage.training import TrainSchedule
from agri.flooddamage.unet import (
    SegSample,
    UnetConfig,
    build_unet,
    inverse_frequency_weights,
    make_seg_dataset,
    predict_damage,
    predict_logits,
    samples_f1,
    train_unet,
    unet_parameter_count,
)

GEO = GeoTransform(0.0, 0.0, 3.0, -3.0)

SMALL = UnetConfig(depth=2, base_channels=4)


def _delta(size: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    delta = rng.normal(0.0, 0.03, (size, size))
    delta[: size // 2, : size // 2] += 0.25
    delta[size // 2 :, size // 2 :] += 0.6
    return delta.astype(np.float32)


def _pair(size: int, seed: int = 0):
    delta = Raster.from_array(_delta(size, seed), GEO)
    return delta, threshold_label(delta, ThresholdConfig())


def _pointwise(model):
    # keep only the center tap of every 3x3 kernel
    for _, parameter in model.named_parameters():
        if parameter.data.ndim == 4 and parameter.data.shape[-1] == 3:
            center = parameter.data[..., 1, 1].copy()
            parameter.data[...] = 0.0
            parameter.data[..., 1, 1] = center
    return model


def test_parameter_count():
    for config in [SMALL, UnetConfig(depth=3, base_channels=2), UnetConfig()]:
        assert build_unet(config).num_parameters() == unet_parameter_count(config)


def test_output_shape():
    model = build_unet(SMALL)

    with no_grad():
        out = model(Tensor(np.zeros((2, 1, 16, 24), dtype=np.float32)))

    assert out.shape == (2, 3, 16, 24)
    assert SMALL.size_multiple == 4


def test_loss_configuration():
    assert UnetConfig().loss_gamma is None
    assert UnetConfig(focal=True).loss_gamma == 2.0
    assert UnetConfig(focal=True, focal_gamma=1.0).loss_gamma == 1.0
    with pytest.raises(ValueError):
        UnetConfig(class_weights=(1.0, -1.0, 1.0))


def test_inverse_frequency_weights():
    labels = np.array([[0, 0, 0, 1], [0, 0, 0, 1]])
    valid = np.ones((2, 4), dtype=bool)
    sample = SegSample(np.zeros((2, 4)), labels, valid)

    weights = inverse_frequency_weights([sample])

    # 8 pixels: 6 No, 2 Partial, no Full
    assert weights == pytest.approx((8 / 18, 8 / 6, 0.0))


def test_segmentation_chips():
    delta, labels = _pair(64)
    mask = np.zeros((64, 64), dtype=bool)
    mask[5, 5] = True
    delta = delta.replace(nodata_mask=mask)

    samples = make_seg_dataset([(delta, labels)], chip=32, max_nodata_fraction=0.01)

    assert len(samples) == 4
    first = samples[0]
    assert not first.valid[5, 5]
    assert first.labels[5, 5] == 0
    assert first.delta[5, 5] != delta.nodata_value
    assert first.labels.dtype == np.int64
    # bottom-right chip: delta around 0.6 everywhere
    assert (samples[3].labels == 2).all()
    assert len(make_seg_dataset([(delta, labels)], chip=32)) == 3


def test_tiled_prediction_matches_a_single_pass():
    model = _pointwise(build_unet(SMALL, seed=2))
    values = _delta(256, seed=1)
    delta = Raster.from_array(values, GEO)

    logits = predict_logits(model, delta, tile=128, overlap=32)

    with no_grad():
        whole = model(Tensor(values[np.newaxis, np.newaxis])).data[0]
    assert logits.shape == (3, 256, 256)
    assert logits == pytest.approx(whole, abs=1e-5)


def test_prediction_pads_and_propagates_nodata():
    model = build_unet(SMALL, seed=3)
    values = _delta(30)
    values[0, 0] = np.nan
    delta = Raster.from_array(values, GEO)

    damage = predict_damage(model, delta, tile=32, overlap=8, min_size=None)

    assert damage.shape == (30, 30)
    assert damage.kind is RasterKind.LABELS
    assert damage.nodata_mask[0, 0]
    assert set(np.unique(damage.values[damage.valid_mask])) <= {0.0, 1.0, 2.0}

    with pytest.raises(ValueError):
        predict_logits(model, delta, tile=30)


def test_short_training_logs_f1():
    train = make_seg_dataset([_pair(64, seed=0)], chip=32)
    val = make_seg_dataset([_pair(32, seed=1)], chip=32)
    config = UnetConfig(depth=2, base_channels=4, class_weighting=True, focal=True)
    schedule = TrainSchedule(max_epochs=2, batch_size=2, learning_rate=1e-3)

    model, result = train_unet(train, val, config, schedule)

    assert len(result.history) == 2
    metrics = result.history[result.best_epoch - 1].metrics
    assert set(metrics) == {"f1_no", "f1_partial", "f1_full", "macro_f1"}
    assert samples_f1(model, val)["macro_f1"] == pytest.approx(metrics["macro_f1"])


@pytest.mark.slow
def test_overfits_a_single_chip():
    samples = make_seg_dataset([_pair(32, seed=4)], chip=32)
    config = UnetConfig(depth=2, base_channels=8)
    schedule = TrainSchedule(
        max_epochs=300,
        batch_size=1,
        learning_rate=1e-3,
        early_stop_patience=300,
        plateau_patience=300,
    )

    _, result = train_unet(samples, samples, config, schedule)

    assert result.best_val_loss < 0.2 * result.history[0].val_loss
