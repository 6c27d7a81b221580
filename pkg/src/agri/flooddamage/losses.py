"""Masked training objectives: L1 for super-resolution, cross-entropy for
segmentation."""

from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import Function, Tensor


def _as_mask(valid_mask: Optional[np.ndarray], shape: Tuple[int, ...]) -> np.ndarray:
    if valid_mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(valid_mask, dtype=bool)
    if mask.shape != shape:
        raise ShapeError(f"Mask shape {mask.shape} does not match {shape}")
    return mask


class L1Loss(Function):
    def forward(  # type: ignore[override]
        self,
        pred: np.ndarray,
        target: np.ndarray,
        valid_mask: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        if pred.shape != target.shape:
            raise ShapeError(f"l1_loss: {pred.shape} vs target {target.shape}")
        mask = _as_mask(valid_mask, pred.shape)
        count = int(mask.sum())
        if count == 0:
            raise ShapeError("l1_loss: no valid pixels")
        diff = np.where(mask, pred - target.astype(pred.dtype), 0)
        self.sign = np.sign(diff).astype(pred.dtype)
        self.count = count
        return np.asarray(np.abs(diff).sum() / count, dtype=pred.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return ((grad * self.sign / self.count).astype(self.sign.dtype),)


class CrossEntropyLoss(Function):
    """
    Weighted (optionally focal) cross-entropy over the valid pixels.

    loss = sum_i -w_{y_i} (1 - p_i)^gamma log p_i / sum_i w_{y_i}, where p_i is
    the softmax probability of the true class at pixel i.
    """

    def forward(  # type: ignore[override]
        self,
        logits: np.ndarray,
        labels: np.ndarray,
        class_weights: Optional[Sequence[float]] = None,
        focal_gamma: Optional[float] = None,
        valid_mask: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        if logits.ndim != 4:
            raise ShapeError(
                f"cross_entropy_loss expects (B, C, H, W), got {logits.shape}"
            )
        batch, n_classes, height, width = logits.shape
        if labels.shape != (batch, height, width):
            raise ShapeError(f"Labels shape {labels.shape} != {(batch, height, width)}")
        mask = _as_mask(valid_mask, labels.shape)

        label_values = labels[mask]
        if label_values.size and (
            np.any(label_values != np.round(label_values))
            or label_values.min() < 0
            or label_values.max() >= n_classes
        ):
            raise ShapeError(
                f"Labels must be integers in [0, {n_classes - 1}] at valid pixels"
            )
        targets = np.where(mask, labels, 0).astype(np.int64)

        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        probs = np.exp(log_probs)
        log_pt = np.take_along_axis(log_probs, targets[:, np.newaxis], axis=1)[:, 0]
        pt = np.exp(log_pt)

        if class_weights is None:
            weights = np.ones_like(log_pt)
        else:
            table = np.asarray(class_weights, dtype=logits.dtype)
            if table.shape != (n_classes,):
                raise ShapeError(
                    f"Expected {n_classes} class weights, got {table.shape}"
                )
            weights = table[targets]
        weights = np.where(mask, weights, 0).astype(logits.dtype)
        denominator = weights.sum()
        if not denominator > 0:
            raise ShapeError(
                "cross_entropy_loss: no valid (positively weighted) pixels"
            )

        gamma = 0.0 if focal_gamma is None else float(focal_gamma)
        if gamma < 0:
            raise ValueError(f"focal_gamma must be >= 0, got {gamma}")
        one_minus = np.maximum(1.0 - pt, 0.0)
        if gamma:
            modulation = one_minus**gamma
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = np.where(
                    one_minus > 0, gamma * pt * log_pt * one_minus ** (gamma - 1), 0.0
                )
            # d/dz_j of -(1 - p)^g log p = -(delta_j - p_j) * (modulation - slope)
            factor = modulation - slope
        else:
            modulation = np.ones_like(pt)
            factor = modulation

        one_hot = np.zeros_like(probs)
        np.put_along_axis(one_hot, targets[:, np.newaxis], 1.0, axis=1)
        scale = (weights * factor / denominator)[:, np.newaxis]
        self.grad_logits = (-(one_hot - probs) * scale).astype(logits.dtype)

        loss = -(weights * modulation * log_pt).sum() / denominator
        return np.asarray(loss, dtype=logits.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return ((grad * self.grad_logits).astype(self.grad_logits.dtype),)


def l1_loss(
    pred: Tensor, target: np.ndarray, valid_mask: Optional[np.ndarray] = None
) -> Tensor:
    """
    Mean absolute error over the valid pixels.

    Args:
        pred: prediction, any shape.
        target: reference values, same shape as ``pred``.
        valid_mask: boolean array of the same shape, True where the pixel
            counts; all pixels count when None.

    Raises:
        ShapeError: on shape mismatch or when no pixel is valid.

    Returns:
        scalar loss tensor.
    """
    return L1Loss.apply(pred, target=np.asarray(target), valid_mask=valid_mask)


def cross_entropy_loss(
    logits: Tensor,
    labels: np.ndarray,
    class_weights: Optional[Sequence[float]] = None,
    focal_gamma: Optional[float] = None,
    valid_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Cross-entropy of per-pixel class logits, computed from a stable log-softmax.

    Args:
        logits: tensor of shape (B, C, H, W).
        labels: class indices of shape (B, H, W); ignored at invalid pixels.
        class_weights: one weight per class; the weighted mean divides by the
            sum of the weights of the valid pixels' true classes.
        focal_gamma: focusing parameter; the per-pixel loss is multiplied by
            (1 - p_true)^gamma when given.
        valid_mask: boolean array of shape (B, H, W).

    Raises:
        ShapeError: for a label outside [0, C) at a valid pixel, or when no
            pixel is valid.

    Returns:
        scalar loss tensor.
    """
    return CrossEntropyLoss.apply(
        logits,
        labels=np.asarray(labels),
        class_weights=class_weights,
        focal_gamma=focal_gamma,
        valid_mask=valid_mask,
    )
