"""Minimal dense-tensor engine with reverse-mode differentiation."""

from .functional import (
    PoolIndices,
    concat_channels,
    conv2d,
    conv_transpose2d,
    dropout,
    max_unpool2d,
    maxpool2d,
    relu,
    sigmoid,
)
from .gradcheck import GradCheckResult, gradcheck, numerical_gradient, relative_error
from .tensor import (
    Function,
    Graph,
    Tensor,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
)

__all__ = [
    "Tensor",
    "Function",
    "Graph",
    "PoolIndices",
    "precision",
    "no_grad",
    "get_default_dtype",
    "is_grad_enabled",
    "conv2d",
    "conv_transpose2d",
    "maxpool2d",
    "max_unpool2d",
    "relu",
    "sigmoid",
    "concat_channels",
    "dropout",
    "gradcheck",
    "numerical_gradient",
    "relative_error",
    "GradCheckResult",
]
