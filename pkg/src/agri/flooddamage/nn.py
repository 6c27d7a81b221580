"""Parameter containers for the networks."""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CheckpointError
from .functional import conv2d
from .tensor import Tensor

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

StateDict = Dict[str, np.ndarray]


class Module(ABC):
    """
    Base class of the network building blocks.

    Tensor attributes that require gradients are registered as parameters and
    Module attributes as sub-modules, in assignment order; parameter names are
    the dotted attribute paths ("blocks.3.conv1.weight").
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    @abstractmethod
    def forward(self, *inputs: Tensor) -> Tensor:
        pass

    def __call__(self, *inputs: Tensor) -> Tensor:
        return self.forward(*inputs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, parameter in self._parameters.items():
            yield prefix + name, parameter
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> List[Tensor]:
        return [parameter for _, parameter in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(int(p.data.size) for p in self.parameters())

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.zero_grad()

    def state_dict(self) -> StateDict:
        """Copies of the parameter values, by name."""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: StateDict) -> None:
        """
        Overwrite the parameter values.

        Raises:
            CheckpointError: if the names or shapes do not match the model.
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(
                f"State does not fit the model: missing {missing[:5]}, "
                f"unexpected {unexpected[:5]}"
            )
        for name, parameter in own.items():
            value = np.asarray(state[name])
            if value.shape != parameter.shape:
                raise CheckpointError(
                    f"Parameter {name}: shape {value.shape} != {parameter.shape}"
                )
            parameter.data = value.astype(parameter.dtype, copy=True)
            parameter.zero_grad()

    def astype(self, dtype: Any) -> "Module":
        """Convert every parameter in place (float64 is used for gradient checks)."""
        for parameter in self.parameters():
            parameter.data = parameter.data.astype(dtype)
            parameter.zero_grad()
        return self


class ModuleList(Module):
    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def forward(self, *inputs: Tensor) -> Tensor:
        raise NotImplementedError("ModuleList is a container; iterate over it.")


class Conv2d(Module):
    """
    Same-size convolution layer.

    Weights are Kaiming-uniform, U(-sqrt(6 / fan_in), sqrt(6 / fan_in)) with
    fan_in = in_channels * kernel^2; biases start at zero.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int = 3,
        rng: Optional[np.random.Generator] = None,
        dtype: Any = np.float32,
    ):
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError(f"Kernel size must be odd, got {kernel}")
        if rng is None:
            rng = np.random.default_rng(0)
        fan_in = in_channels * kernel * kernel
        bound = np.sqrt(6.0 / fan_in)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        shape = (out_channels, in_channels, kernel, kernel)
        self.weight = Tensor(
            rng.uniform(-bound, bound, shape).astype(dtype),
            requires_grad=True,
            name="weight",
        )
        self.bias = Tensor(
            np.zeros(out_channels, dtype=dtype), requires_grad=True, name="bias"
        )

    def forward(self, x: Tensor) -> Tensor:  # type: ignore[override]
        return conv2d(x, self.weight, self.bias)

    def __repr__(self) -> str:
        return f"Conv2d({self.in_channels}, {self.out_channels}, kernel={self.kernel})"
