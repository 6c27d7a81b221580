from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import pytest

from agri.flooddamage.errors import DivergenceError
from agri.flooddamage.functional import scale
from agri.flooddamage.losses import l1_loss
from agri.flooddamage.nn import Conv2d, Module
from agri.flooddamage.tensor import Tensor
from agri.flooddamage.training import (
    EpochRecord,
    TrainSchedule,
    history_to_frame,
    run_training,
    write_history_csv,
)

Sample = Tuple[np.ndarray, np.ndarray]


def _samples(n: int, seed: int) -> List[Sample]:
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        x = rng.standard_normal((1, 4, 4)).astype(np.float32)
        samples.append((x, 2.0 * x + 0.5))
    return samples


def _loss(model: Module, batch: Sequence[Sample]) -> Tensor:
    x = np.stack([s[0] for s in batch])
    y = np.stack([s[1] for s in batch])
    return l1_loss(model(Tensor(x)), y)


def _model() -> Conv2d:
    return Conv2d(1, 1, kernel=1, rng=np.random.default_rng(0))


def test_training_reduces_the_loss():
    model = _model()
    schedule = TrainSchedule(max_epochs=40, batch_size=4, learning_rate=0.05)

    result = run_training(model, _samples(16, 0), _samples(4, 1), _loss, schedule)

    assert result.history[-1].train_loss < result.history[0].train_loss
    assert result.best_val_loss < 0.5 * result.history[0].val_loss
    assert result.steps == 4 * len(result.history)
    # the model is left holding the best parameters
    assert np.array_equal(model.weight.data, result.best_state["weight"])


def test_training_is_deterministic():
    schedule = TrainSchedule(max_epochs=3, batch_size=3, learning_rate=0.01, seed=7)

    states = []
    for _ in range(2):
        model = _model()
        run_training(model, _samples(10, 0), _samples(3, 1), _loss, schedule)
        states.append(model.state_dict())

    for name in states[0]:
        assert states[0][name].tobytes() == states[1][name].tobytes()


def test_early_stopping_and_plateau():
    schedule = TrainSchedule(
        max_epochs=20,
        batch_size=4,
        learning_rate=1e-9,
        min_delta=1.0,
        early_stop_patience=2,
        plateau_patience=1,
        plateau_factor=0.5,
    )

    result = run_training(_model(), _samples(8, 0), _samples(4, 1), _loss, schedule)

    assert result.stopped_early
    assert result.best_epoch == 1
    assert [r.epoch for r in result.history] == [1, 2, 3]
    assert result.history[1].lr == pytest.approx(1e-9)
    assert result.history[2].lr == pytest.approx(0.5e-9)


def test_step_budget():
    schedule = TrainSchedule(max_epochs=10, max_steps=3, batch_size=1)

    result = run_training(_model(), _samples(8, 0), _samples(2, 1), _loss, schedule)

    assert result.steps == 3
    assert len(result.history) == 1


def test_divergence_restores_the_best_state():
    diverged = [False]

    def loss(model: Module, batch: Sequence[Sample]) -> Tensor:
        value = _loss(model, batch)
        return scale(value, float("nan")) if diverged[0] else value

    def validate(model: Module) -> Dict[str, float]:
        diverged[0] = True
        return {"marker": 1.0}

    model = _model()
    schedule = TrainSchedule(max_epochs=5, batch_size=4, learning_rate=0.01)

    with pytest.raises(DivergenceError) as excinfo:
        run_training(model, _samples(8, 0), _samples(4, 1), loss, schedule, validate)

    error = excinfo.value
    assert len(error.history) == 1
    assert error.history[0].metrics == {"marker": 1.0}
    assert error.last_good_state is not None
    assert np.array_equal(model.weight.data, error.last_good_state["weight"])
    assert error.exit_code == 7


def test_empty_splits():
    with pytest.raises(ValueError):
        run_training(_model(), [], _samples(2, 1), _loss, TrainSchedule())


def test_history_csv(tmp_path: Path):
    history = [
        EpochRecord(1, 0.5, 0.6, 1e-3, {"psnr": 30.0}),
        EpochRecord(2, 0.4, 0.55, 1e-3, {"psnr": 31.0}),
    ]

    frame = history_to_frame(history)
    assert list(frame.columns) == ["epoch", "train_loss", "val_loss", "lr", "psnr"]

    path = tmp_path / "history.csv"
    write_history_csv(history, path)
    loaded = pd.read_csv(path)
    assert loaded["psnr"].tolist() == [30.0, 31.0]
    assert loaded["epoch"].tolist() == [1, 2]
