import logging
from typing import Dict, List, Tuple

import numpy as np
from attr import Factory, define, evolve

from .errors import NonFiniteGradientError
from .tensor import Tensor

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

ArrayDict = Dict[str, np.ndarray]


@define(frozen=True)
class OptimizerState:
    """
    Adam moments and hyperparameters.

    Attributes:
        lr: learning rate (alpha).
        beta1: decay of the first moment.
        beta2: decay of the second moment.
        eps: denominator stabilizer.
        t: number of steps taken.
        m: first moment per parameter name.
        v: second moment per parameter name.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: ArrayDict = Factory(dict)
    v: ArrayDict = Factory(dict)


def adam_step(
    params: ArrayDict, grads: ArrayDict, state: OptimizerState
) -> Tuple[ArrayDict, OptimizerState]:
    """
    One bias-corrected Adam update.

    The inputs are not modified.

    Args:
        params: parameter values by name.
        grads: gradients by name (same names and shapes as params).
        state: optimizer state before the step.

    Raises:
        NonFiniteGradientError: if any gradient holds NaN or inf; nothing is
            updated in that case.

    Returns:
        Tuple: the updated parameters and the state after the step.
    """
    for name, grad in grads.items():
        if not np.isfinite(grad).all():
            raise NonFiniteGradientError(
                f"Non-finite gradient for parameter {name}; step refused."
            )

    t = state.t + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params: ArrayDict = {}
    new_m: ArrayDict = {}
    new_v: ArrayDict = {}
    for name, value in params.items():
        grad = grads[name]
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_params[name] = (value - update).astype(value.dtype)
        new_m[name] = m.astype(value.dtype)
        new_v[name] = v.astype(value.dtype)
    return new_params, evolve(state, t=t, m=new_m, v=new_v)


class Adam:
    """Applies adam_step to named parameter tensors."""

    def __init__(
        self,
        named_parameters: List[Tuple[str, Tensor]],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.parameters = dict(named_parameters)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state = evolve(self.state, lr=value)

    def zero_grad(self) -> None:
        for parameter in self.parameters.values():
            parameter.zero_grad()

    def step(self) -> None:
        values = {name: p.data for name, p in self.parameters.items()}
        grads = {
            name: np.zeros_like(p.data) if p.grad is None else p.grad
            for name, p in self.parameters.items()
        }
        new_values, self.state = adam_step(values, grads, self.state)
        for name, parameter in self.parameters.items():
            parameter.data = new_values[name]
