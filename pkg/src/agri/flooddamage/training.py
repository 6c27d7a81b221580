"""
Generic training loop: seeded mini-batch Adam, plateau learning-rate
scheduling, early stopping on the validation loss.
"""

import logging
import math
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence

import numpy as np
import pandas as pd
from attr import Factory, define
from pydantic import BaseModel, Field, model_validator
from rxn.utilities.containers import chunker
from rxn.utilities.files import PathLike

from .errors import DivergenceError, NonFiniteGradientError
from .nn import Module, StateDict
from .optim import Adam
from .tensor import Tensor, no_grad
from .utils import atomic_write_text

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# loss_fn(model, samples) -> scalar loss tensor of one mini-batch
LossFunction = Callable[[Module, Sequence[Any]], Tensor]
# validate(model) -> extra metrics logged after every epoch
ValidationFunction = Callable[[Module], Dict[str, float]]


class TrainSchedule(BaseModel):
    """Optimization budget and scheduling constants."""

    max_epochs: int = Field(default=100, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=8, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    early_stop_patience: int = Field(default=10, ge=1)
    min_delta: float = Field(default=1e-5, ge=0)
    plateau_factor: float = Field(default=0.5, gt=0, lt=1)
    plateau_patience: int = Field(default=5, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_patience(self) -> "TrainSchedule":
        if self.plateau_patience > self.early_stop_patience:
            logger.warning(
                f"Plateau patience {self.plateau_patience} exceeds early-stop "
                f"patience {self.early_stop_patience}; the LR will never drop."
            )
        return self


@define
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    metrics: Dict[str, float] = Factory(dict)


@define
class TrainingResult:
    """
    Attributes:
        best_state: parameters at the epoch with the lowest validation loss.
        best_epoch: that epoch (1-based).
        best_val_loss: its validation loss.
        history: one record per completed epoch.
        steps: optimizer steps taken.
        stopped_early: whether early stopping ended the run.
    """

    best_state: StateDict
    best_epoch: int
    best_val_loss: float
    history: List[EpochRecord] = Factory(list)
    steps: int = 0
    stopped_early: bool = False


def evaluate_loss(
    model: Module, samples: Sequence[Any], loss_fn: LossFunction, batch_size: int
) -> float:
    """Sample-weighted mean loss over a dataset, without building a graph."""
    total = 0.0
    count = 0
    with no_grad():
        for batch in chunker(samples, batch_size):
            total += loss_fn(model, batch).item() * len(batch)
            count += len(batch)
    return total / count


def run_training(
    model: Module,
    train_set: Sequence[Any],
    val_set: Sequence[Any],
    loss_fn: LossFunction,
    schedule: TrainSchedule,
    validate: Optional[ValidationFunction] = None,
) -> TrainingResult:
    """
    Train a model with Adam until early stopping or the budget runs out.

    The training order is a fresh permutation every epoch, drawn from a
    generator seeded with ``schedule.seed``, so that two runs with the same
    inputs produce identical parameters. After ``plateau_patience`` epochs
    without an improvement of at least ``min_delta`` the learning rate is
    multiplied by ``plateau_factor``; after ``early_stop_patience`` such
    epochs training stops. The model is left holding the best parameters.

    Args:
        model: model to train in place.
        train_set: training samples.
        val_set: validation samples.
        loss_fn: computes the scalar loss of a mini-batch.
        schedule: optimization budget and constants.
        validate: optional extra validation metrics, logged every epoch.

    Raises:
        ValueError: for empty splits.
        DivergenceError: when a loss or gradient becomes non-finite; carries
            the best state so far and the history.

    Returns:
        the best state, its epoch, and the per-epoch history.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("Training needs non-empty training and validation splits.")

    rng = np.random.default_rng(schedule.seed)
    optimizer = Adam(list(model.named_parameters()), lr=schedule.learning_rate)
    result = TrainingResult(
        best_state=model.state_dict(), best_epoch=0, best_val_loss=math.inf
    )
    epochs_without_improvement = 0
    epochs_since_lr_drop = 0

    for epoch in range(1, schedule.max_epochs + 1):
        order = rng.permutation(len(train_set))
        train_total = 0.0
        train_count = 0
        for indices in chunker(order.tolist(), schedule.batch_size):
            batch = [train_set[i] for i in indices]
            loss = loss_fn(model, batch)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                message = f"Non-finite training loss at step {result.steps + 1}."
                _diverge(model, result, message)
            optimizer.zero_grad()
            loss.backward()
            try:
                optimizer.step()
            except NonFiniteGradientError as e:
                _diverge(model, result, str(e), cause=e)
            result.steps += 1
            train_total += loss_value * len(batch)
            train_count += len(batch)
            if schedule.max_steps is not None and result.steps >= schedule.max_steps:
                break

        val_loss = evaluate_loss(model, val_set, loss_fn, schedule.batch_size)
        if not math.isfinite(val_loss):
            _diverge(model, result, f"Non-finite validation loss at epoch {epoch}.")
        metrics = {} if validate is None else dict(validate(model))
        record = EpochRecord(
            epoch=epoch,
            train_loss=train_total / train_count,
            val_loss=val_loss,
            lr=optimizer.lr,
            metrics=metrics,
        )
        result.history.append(record)
        extra = "".join(f", {k}={v:.4f}" for k, v in metrics.items())
        logger.info(
            f"Epoch {epoch}: train_loss={record.train_loss:.6f}, "
            f"val_loss={val_loss:.6f}, lr={record.lr:.3g}{extra}"
        )

        if val_loss < result.best_val_loss - schedule.min_delta:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            result.best_state = model.state_dict()
            epochs_without_improvement = 0
            epochs_since_lr_drop = 0
        else:
            epochs_without_improvement += 1
            epochs_since_lr_drop += 1
            if epochs_without_improvement >= schedule.early_stop_patience:
                logger.info(
                    f"Early stop at epoch {epoch}: no improvement since "
                    f"epoch {result.best_epoch}."
                )
                result.stopped_early = True
                break
            if epochs_since_lr_drop >= schedule.plateau_patience:
                optimizer.lr = optimizer.lr * schedule.plateau_factor
                epochs_since_lr_drop = 0
                logger.info(f"Validation plateau: learning rate -> {optimizer.lr:.3g}.")

        if schedule.max_steps is not None and result.steps >= schedule.max_steps:
            logger.info(f"Step budget of {schedule.max_steps} reached.")
            break

    model.load_state_dict(result.best_state)
    return result


def _diverge(
    model: Module,
    result: TrainingResult,
    message: str,
    cause: Optional[Exception] = None,
) -> NoReturn:
    logger.error(f"{message} Restoring the parameters of epoch {result.best_epoch}.")
    model.load_state_dict(result.best_state)
    raise DivergenceError(
        message, last_good_state=result.best_state, history=result.history
    ) from cause


def history_to_frame(history: Sequence[EpochRecord]) -> pd.DataFrame:
    rows = [
        {
            "epoch": r.epoch,
            "train_loss": r.train_loss,
            "val_loss": r.val_loss,
            "lr": r.lr,
            **r.metrics,
        }
        for r in history
    ]
    return pd.DataFrame(rows, columns=_history_columns(history))


def _history_columns(history: Sequence[EpochRecord]) -> List[str]:
    columns = ["epoch", "train_loss", "val_loss", "lr"]
    for record in history:
        columns.extend(k for k in record.metrics if k not in columns)
    return columns


def write_history_csv(history: Sequence[EpochRecord], path: PathLike) -> None:
    """Loss history as CSV (epoch, train_loss, val_loss, lr, extra metrics)."""
    atomic_write_text(path, history_to_frame(history).to_csv(index=False))
