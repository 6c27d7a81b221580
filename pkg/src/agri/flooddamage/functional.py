"""Differentiable operations on (batch, channels, height, width) tensors."""

from typing import Optional, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import Function, Tensor


def conv_output_size(size: int, kernel: int, padding: int, stride: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class Conv2d(Function):
    """
    Cross-correlation with bias, square kernel, zero padding.

    Computed as a sum over the k*k kernel taps of channel contractions, which
    keeps the temporary memory at the size of one input.
    """

    def forward(  # type: ignore[override]
        self,
        x: np.ndarray,
        weight: np.ndarray,
        bias: np.ndarray,
        padding: int = 0,
        stride: int = 1,
    ) -> np.ndarray:
        if x.ndim != 4 or weight.ndim != 4:
            raise ShapeError(
                f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}"
            )
        out_channels, in_channels, kernel, kernel_w = weight.shape
        if kernel != kernel_w:
            raise ShapeError(f"Only square kernels are supported, got {weight.shape}")
        if x.shape[1] != in_channels:
            raise ShapeError(
                f"Input has {x.shape[1]} channels, weight expects {in_channels}"
            )
        if bias.shape != (out_channels,):
            raise ShapeError(f"Bias shape {bias.shape} != ({out_channels},)")
        out_h = conv_output_size(x.shape[2], kernel, padding, stride)
        out_w = conv_output_size(x.shape[3], kernel, padding, stride)
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"Input {x.shape} too small for kernel {kernel}")

        if padding:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.padded = x
        self.weight = weight
        self.padding = padding
        self.stride = stride
        self.out_size = (out_h, out_w)

        out = np.zeros((x.shape[0], out_h, out_w, out_channels), dtype=x.dtype)
        for i, j in np.ndindex(kernel, kernel):
            # (B, C_in, out_h, out_w) x (C_out, C_in) -> (B, out_h, out_w, C_out)
            out += np.tensordot(self._tap(i, j), weight[:, :, i, j], axes=([1], [1]))
        out = out.transpose(0, 3, 1, 2) + bias[np.newaxis, :, np.newaxis, np.newaxis]
        return np.ascontiguousarray(out, dtype=x.dtype)

    def _tap(self, i: int, j: int) -> np.ndarray:
        out_h, out_w = self.out_size
        s = self.stride
        return self.padded[:, :, i : i + out_h * s : s, j : j + out_w * s : s]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        kernel = self.weight.shape[2]
        out_h, out_w = self.out_size
        s = self.stride

        grad_weight = np.zeros_like(self.weight, dtype=grad.dtype)
        grad_padded = np.zeros(self.padded.shape, dtype=grad.dtype)
        for i, j in np.ndindex(kernel, kernel):
            grad_weight[:, :, i, j] = np.tensordot(
                grad, self._tap(i, j), axes=([0, 2, 3], [0, 2, 3])
            )
            # (B, C_out, out_h, out_w) x (C_out, C_in) -> (B, out_h, out_w, C_in)
            contribution = np.tensordot(grad, self.weight[:, :, i, j], axes=([1], [0]))
            grad_padded[
                :, :, i : i + out_h * s : s, j : j + out_w * s : s
            ] += contribution.transpose(0, 3, 1, 2)
        grad_bias = grad.sum(axis=(0, 2, 3)).astype(grad.dtype)

        p = self.padding
        if p:
            grad_padded = grad_padded[:, :, p:-p, p:-p]
        return grad_padded, grad_weight, grad_bias


class Relu(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.positive = x > 0
        return np.where(self.positive, x, 0).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.positive,)


class Add(Function):
    """Elementwise sum; an operand with batch size 1 is broadcast over the batch."""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        if a.shape[1:] != b.shape[1:] or (
            a.shape[:1] != b.shape[:1] and 1 not in (a.shape[0], b.shape[0])
        ):
            raise ShapeError(f"Cannot add shapes {a.shape} and {b.shape}")
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return tuple(  # type: ignore[return-value]
            _reduce_batch(grad, shape) for shape in self.shapes
        )


def _reduce_batch(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape != shape:
        return grad.sum(axis=0, keepdims=True)
    return grad


class Scale(Function):
    def forward(self, x: np.ndarray, factor: float = 1.0) -> np.ndarray:  # type: ignore[override]
        self.factor = factor
        return (x * factor).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return ((grad * self.factor).astype(grad.dtype),)


class PixelShuffle(Function):
    """(B, C*r*r, H, W) -> (B, C, H*r, W*r)."""

    def forward(self, x: np.ndarray, factor: int = 2) -> np.ndarray:  # type: ignore[override]
        batch, channels, height, width = x.shape
        if channels % (factor * factor):
            raise ShapeError(
                f"pixel_shuffle: {channels} channels not divisible by {factor}^2"
            )
        self.factor = factor
        out_channels = channels // (factor * factor)
        out = x.reshape(batch, out_channels, factor, factor, height, width)
        out = out.transpose(0, 1, 4, 2, 5, 3)
        return out.reshape(batch, out_channels, height * factor, width * factor)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        r = self.factor
        batch, channels, height, width = grad.shape
        out = grad.reshape(batch, channels, height // r, r, width // r, r)
        out = out.transpose(0, 1, 3, 5, 2, 4)
        return (out.reshape(batch, channels * r * r, height // r, width // r),)


class MaxPool2d(Function):
    """Non-overlapping max pooling; ties go to the first index in row-major order."""

    def forward(self, x: np.ndarray, kernel: int = 2) -> np.ndarray:  # type: ignore[override]
        batch, channels, height, width = x.shape
        out_h, out_w = height // kernel, width // kernel
        if out_h < 1 or out_w < 1:
            raise ShapeError(
                f"max_pool2d: input {x.shape} smaller than kernel {kernel}"
            )
        self.kernel = kernel
        self.input_shape = x.shape
        cropped = x[:, :, : out_h * kernel, : out_w * kernel]
        blocks = cropped.reshape(batch, channels, out_h, kernel, out_w, kernel)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(
            batch, channels, out_h, out_w, kernel * kernel
        )
        self.argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self.argmax[..., np.newaxis], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        k = self.kernel
        batch, channels, out_h, out_w = grad.shape
        blocks = np.zeros((batch, channels, out_h, out_w, k * k), dtype=grad.dtype)
        np.put_along_axis(
            blocks, self.argmax[..., np.newaxis], grad[..., np.newaxis], axis=-1
        )
        blocks = blocks.reshape(batch, channels, out_h, out_w, k, k).transpose(
            0, 1, 2, 4, 3, 5
        )
        out = np.zeros(self.input_shape, dtype=grad.dtype)
        out[:, :, : out_h * k, : out_w * k] = blocks.reshape(
            batch, channels, out_h * k, out_w * k
        )
        return (out,)


class UpsampleNearest(Function):
    def forward(self, x: np.ndarray, factor: int = 2) -> np.ndarray:  # type: ignore[override]
        self.factor = factor
        return x.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        r = self.factor
        batch, channels, height, width = grad.shape
        blocks = grad.reshape(batch, channels, height // r, r, width // r, r)
        return (blocks.sum(axis=(3, 5)),)


class ConcatChannels(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise ShapeError(f"Cannot concatenate {a.shape} and {b.shape} on channels")
        self.split = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad[:, : self.split], grad[:, self.split :]


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    padding: Optional[int] = None,
    stride: int = 1,
) -> Tensor:
    """
    2-D convolution (cross-correlation).

    Args:
        x: input of shape (B, C_in, H, W).
        weight: kernel of shape (C_out, C_in, k, k), k odd.
        bias: bias of shape (C_out,).
        padding: zero padding; defaults to (k - 1) / 2 ("same" output size).
        stride: stride.

    Returns:
        output of shape (B, C_out, H', W'), H' = (H + 2p - k) / stride + 1.
    """
    if padding is None:
        padding = (weight.shape[2] - 1) // 2
    return Conv2d.apply(x, weight, bias, padding=padding, stride=stride)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def pixel_shuffle(x: Tensor, factor: int) -> Tensor:
    return PixelShuffle.apply(x, factor=factor)


def max_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    return MaxPool2d.apply(x, kernel=kernel)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    return ConcatChannels.apply(a, b)
