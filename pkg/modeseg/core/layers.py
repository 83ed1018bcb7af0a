"""Module base class and the convolution layers the segmentation nets are built from."""

import logging
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..autodiff import Tensor, conv2d, conv_transpose2d, get_default_dtype
from .exceptions import CheckpointError, NumericalError

logger = logging.getLogger(__name__)


class Module:
    """
    Base class for layers and models.

    Parameters are Tensor attributes with ``requires_grad``; sub-modules are Module
    attributes (or ModuleList items). Both are discovered in attribute insertion order,
    which makes parameter names and their order stable across runs. Non-learned state
    (running statistics) is exposed through ``_local_buffers``.
    """

    def __init__(self):
        self.training = True
        self.path = self.__class__.__name__

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        try:
            return self.forward(*args, **kwargs)
        except NumericalError as e:
            if "layer" not in e.context:
                e.add_context("layer", self.path)
            raise

    def _local_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value

    def _local_buffers(self) -> Dict[str, np.ndarray]:
        return {}

    def _load_local_buffer(self, name: str, value: np.ndarray) -> None:
        raise CheckpointError(f"{self.path} has no buffer '{name}'", parameter=name)

    def named_children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.named_children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for prefix, module in self.named_modules():
            for name, param in module._local_parameters():
                yield (f"{prefix}.{name}" if prefix else name), param

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        for prefix, module in self.named_modules():
            for name, value in module._local_buffers().items():
                yield (f"{prefix}.{name}" if prefix else name), value

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def assign_paths(self) -> "Module":
        """Give every sub-module its dotted name, used when reporting numerical faults."""
        for name, module in self.named_modules():
            module.path = name or self.__class__.__name__
        for name, param in self.named_parameters():
            param.name = name
        return self

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Parameters then buffers, each in discovery order."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        modules = dict(self.named_modules())
        expected = set(params) | {name for name, _ in self.named_buffers()}
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise CheckpointError(
                "Checkpoint entries do not match the model",
                context={"missing": missing[:5], "unexpected": unexpected[:5]},
            )

        for name, value in state.items():
            if name in params:
                param = params[name]
                if param.shape != tuple(value.shape):
                    raise CheckpointError(
                        f"Shape mismatch for '{name}'",
                        parameter=name,
                        context={"model": param.shape, "checkpoint": tuple(value.shape)},
                    )
                param.data = np.array(value, dtype=param.dtype)
            else:
                owner, _, local = name.rpartition(".")
                modules[owner]._load_local_buffer(local, np.array(value))


class ModuleList(Module):
    """Ordered container of sub-modules, named by position."""

    def __init__(self, modules: Optional[List[Module]] = None):
        super().__init__()
        self._items: List[Module] = list(modules or [])

    def append(self, module: Module) -> None:
        self._items.append(module)

    def named_children(self) -> Iterator[Tuple[str, Module]]:
        for i, module in enumerate(self._items):
            yield str(i), module

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


def kaiming_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Conv2d(Module):
    """Square-kernel convolution with Kaiming-uniform weights and zero bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        padding: int = 0,
        stride: int = 1,
    ):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            kaiming_uniform((out_channels, in_channels, kernel_size, kernel_size), fan_in, rng),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)
        self.padding = padding
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    """2x2 stride-2 up-convolution; weight layout (in_channels, out_channels, k, k)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel_size: int = 2,
        stride: int = 2,
    ):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            kaiming_uniform((in_channels, out_channels, kernel_size, kernel_size), fan_in, rng),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, stride=self.stride)
