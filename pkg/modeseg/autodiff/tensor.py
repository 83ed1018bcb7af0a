"""Dense tensors with define-by-run reverse-mode differentiation."""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import ContractError, DimensionError, NumericalError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]

_state = threading.local()


def get_default_dtype() -> np.dtype:
    """Floating point type new tensors are created with on this thread."""
    return getattr(_state, "dtype", np.dtype(np.float32))


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Switch the default tensor precision (float32 or float64) inside the block."""
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"Unsupported precision {dtype}", op="precision")
    previous = get_default_dtype()
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on raw arrays and ``backward``, which receives the
    gradient with respect to the output and returns one gradient (or None) per input.
    Intermediates needed by ``backward`` are cached on the instance during ``forward``.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @property
    def name(self) -> str:
        return self.__class__.__name__

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """Run the operation and record it on the graph when gradients are needed."""
        out, _ = cls.apply_with_context(*tensors, **kwargs)
        return out

    @classmethod
    def apply_with_context(cls, *tensors: "Tensor", **kwargs: Any) -> Tuple["Tensor", "Function"]:
        """Like ``apply`` but also return the function instance (for side outputs)."""
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)

        if not np.all(np.isfinite(out_data)):
            if all(np.all(np.isfinite(t.data)) for t in tensors):
                raise NumericalError(
                    f"{func.name} produced non-finite values from finite inputs",
                    op=func.name,
                    context={"shape": tuple(np.shape(out_data))},
                )

        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        out = Tensor(
            out_data,
            requires_grad=requires_grad,
            creator=func if requires_grad else None,
            dtype=tensors[0].dtype if tensors else None,
        )
        return out, func


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def _check_elementwise(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(
            f"{op} needs equal shapes or a scalar operand",
            op=op,
            shapes={"left": a.shape, "right": b.shape},
        )


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_elementwise("add", a, b)
        return a + b

    def backward(self, grad):
        a, b = self.tensors
        return _reduce_to(grad, a.shape), _reduce_to(grad, b.shape)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_elementwise("sub", a, b)
        return a - b

    def backward(self, grad):
        a, b = self.tensors
        return _reduce_to(grad, a.shape), _reduce_to(-grad, b.shape)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_elementwise("mul", a, b)
        return a * b

    def backward(self, grad):
        a, b = self.tensors
        return _reduce_to(grad * b.data, a.shape), _reduce_to(grad * a.data, b.shape)


class Scale(Function):
    """Multiply by a Python constant."""

    def forward(self, x: np.ndarray, factor: float) -> np.ndarray:
        self.factor = factor
        return x * x.dtype.type(factor)

    def backward(self, grad):
        return (grad * self.factor,)


class Sum(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x.sum(), dtype=x.dtype)

    def backward(self, grad):
        return (np.broadcast_to(grad, self.tensors[0].shape).copy(),)


class Mean(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x.mean(), dtype=x.dtype)

    def backward(self, grad):
        x = self.tensors[0]
        return (np.full(x.shape, grad / x.size, dtype=x.dtype),)


class Tensor:
    """
    A dense array that can take part in reverse-mode differentiation.

    Layout for feature maps is batch-channel-height-width. ``creator`` points at the
    Function that produced this tensor; leaves have no creator and collect ``grad``.
    """

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
        dtype=None,
    ):
        self.data = np.asarray(data, dtype=dtype or get_default_dtype())
        self.requires_grad = requires_grad
        self.creator = creator
        self.name = name
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(
                "item() needs a single-element tensor", op="item", context={"shape": self.shape}
            )
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name, dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self) -> "Tensor":
        return Sum.apply(self)

    def mean(self) -> "Tensor":
        return Mean.apply(self)

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """
        Populate ``grad`` of every leaf reachable from this tensor.

        Without an explicit seed the tensor must be a scalar. Repeated calls accumulate
        into leaf gradients.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    "backward() without a seed gradient needs a scalar tensor",
                    op="backward",
                    context={"shape": self.shape},
                )
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.dtype)
            if seed.shape != self.shape:
                raise DimensionError(
                    "Seed gradient shape differs from tensor shape",
                    op="backward",
                    shapes={"tensor": self.shape, "seed": seed.shape},
                )

        graph = Graph.from_root(self)
        pending: Dict[int, np.ndarray] = {id(self): seed}

        for node in graph.reverse():
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.creator is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue

            input_grads = node.creator.backward(g)
            if not isinstance(input_grads, tuple):
                input_grads = (input_grads,)
            for inp, ig in zip(node.creator.tensors, input_grads):
                if ig is None or not inp.requires_grad:
                    continue
                ig = np.asarray(ig, dtype=inp.dtype)
                key = id(inp)
                pending[key] = ig if key not in pending else pending[key] + ig

    def _wrap(self, other: Any) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other, dtype=self.dtype)

    def __add__(self, other):
        return Add.apply(self, self._wrap(other))

    def __radd__(self, other):
        return Add.apply(self._wrap(other), self)

    def __sub__(self, other):
        return Sub.apply(self, self._wrap(other))

    def __rsub__(self, other):
        return Sub.apply(self._wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Scale.apply(self, factor=float(other))
        return Mul.apply(self, self._wrap(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise ContractError("Only division by a Python number is supported", op="div")
        return Scale.apply(self, factor=1.0 / float(other))

    def __neg__(self):
        return Scale.apply(self, factor=-1.0)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"


class Graph:
    """Topologically ordered view of the operations that produced a tensor."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        """Iterative post-order walk, so deep networks do not hit the recursion limit."""
        ordered: List[Tensor] = []
        visited = set()
        stack = [(root, False)]

        while stack:
            node, children_done = stack.pop()
            if id(node) in visited:
                continue
            if children_done:
                visited.add(id(node))
                ordered.append(node)
                continue
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.tensors:
                    if id(parent) not in visited:
                        stack.append((parent, False))

        return cls(ordered)

    def reverse(self) -> Iterator[Tensor]:
        return reversed(self.nodes)

    def operations(self) -> List[str]:
        return [n.creator.name for n in self.nodes if n.creator is not None]

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.nodes)
