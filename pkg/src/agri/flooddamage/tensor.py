"""
Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor produced by an operation keeps a pointer to the Function instance
that created it; Tensor.backward() walks the graph once in reverse
topological order and accumulates gradients into the leaves that require
them.
"""

import logging
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction (inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """
    N-dimensional array participating in the autodiff graph.

    Attributes:
        data: the values (float32 for training and inference, float64 for
            gradient checks).
        requires_grad: whether gradients flow to this tensor.
        grad: accumulated gradient of the same shape as data, for leaves
            that require it (None until a backward pass reaches them).
        name: optional name, used for parameters.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float32)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._ctx: Optional["Function"] = None

    def __repr__(self) -> str:
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype}, "
            f"requires_grad={self.requires_grad})"
        )

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Back-propagate from this tensor.

        Args:
            grad: upstream gradient; defaults to 1 for scalar tensors.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.dtype)
        if grad.shape != self.shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} != tensor shape {self.shape}"
            )

        pending: Dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(_topological_order(self)):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node._ctx is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = node_grad
                    else:
                        node.grad = node.grad + node_grad
                continue
            parent_grads = node._ctx.backward(node_grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad


def _topological_order(root: Tensor) -> List[Tensor]:
    """Nodes reachable from root, parents before children (iterative DFS)."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


class Function(ABC):
    """
    Base class of the differentiable operations.

    Subclasses implement forward() on numpy arrays and backward() returning
    one gradient (or None) per tensor input; apply() wires the graph.
    """

    def __init__(self) -> None:
        self.parents: Sequence[Tensor] = ()

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        function = cls()
        output = Tensor(function.forward(*(t.data for t in inputs), **kwargs))
        if _grad_enabled and any(t.requires_grad for t in inputs):
            function.parents = inputs
            output.requires_grad = True
            output._ctx = function
        return output

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        """Compute the output from the input arrays; save what backward needs."""

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """
        Gradients with respect to each input, given the output gradient.

        Args:
            grad: gradient of the final scalar with respect to the output.
        """
