"""Neural-network kernels on batch-channel-height-width tensors."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..core.exceptions import ContractError, DimensionError
from .tensor import Function, Tensor

logger = logging.getLogger(__name__)


def _require_4d(op: str, **arrays: np.ndarray) -> None:
    for key, arr in arrays.items():
        if arr.ndim != 4:
            raise DimensionError(
                f"{op} expects 4-D '{key}' in batch-channel-height-width layout",
                op=op,
                shapes={key: arr.shape},
            )


class Conv2d(Function):
    """Cross-correlation with zero padding, computed over strided window views."""

    def forward(
        self, x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, padding: int = 0
    ) -> np.ndarray:
        _require_4d("conv2d", x=x, weight=w)
        n, c, h, wd = x.shape
        c_out, c_in, kh, kw = w.shape
        if c != c_in or b.shape != (c_out,):
            raise DimensionError(
                "conv2d channel mismatch between input, weight and bias",
                op="conv2d",
                shapes={"x": x.shape, "weight": w.shape, "bias": b.shape},
            )
        if stride < 1 or padding < 0 or h + 2 * padding < kh or wd + 2 * padding < kw:
            raise DimensionError(
                "conv2d kernel does not fit the padded input",
                op="conv2d",
                shapes={"x": x.shape, "weight": w.shape},
                context={"stride": stride, "padding": padding},
            )

        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

        self.windows = windows
        self.padded_shape = xp.shape
        self.stride = stride
        self.padding = padding
        return np.ascontiguousarray(out + b[None, :, None, None])

    def backward(self, grad):
        x, w, _ = self.tensors
        s, p = self.stride, self.padding
        _, _, kh, kw = w.shape
        _, _, h_out, w_out = grad.shape

        dw = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))
        db = grad.sum(axis=(0, 2, 3))

        dx = None
        if x.requires_grad:
            cols = np.tensordot(grad, w.data, axes=([1], [0]))  # N, Ho, Wo, Cin, kh, kw
            dxp = np.zeros(self.padded_shape, dtype=grad.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + s * h_out : s, j : j + s * w_out : s] += cols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            h, wd = x.shape[2:]
            dx = dxp[:, :, p : p + h, p : p + wd]
        return dx, dw, db


class ConvTranspose2d(Function):
    """Adjoint of Conv2d; weight layout is (in_channels, out_channels, kh, kw)."""

    def forward(self, x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 2) -> np.ndarray:
        _require_4d("conv_transpose2d", x=x, weight=w)
        n, c, h, wd = x.shape
        c_in, c_out, kh, kw = w.shape
        if c != c_in or b.shape != (c_out,):
            raise DimensionError(
                "conv_transpose2d channel mismatch between input, weight and bias",
                op="conv_transpose2d",
                shapes={"x": x.shape, "weight": w.shape, "bias": b.shape},
            )
        if stride < 1:
            raise DimensionError("Stride must be at least 1", op="conv_transpose2d")

        h_out, w_out = stride * (h - 1) + kh, stride * (wd - 1) + kw
        cols = np.tensordot(x, w, axes=([1], [0]))  # N, H, W, Cout, kh, kw
        out = np.zeros((n, c_out, h_out, w_out), dtype=cols.dtype)
        for i in range(kh):
            for j in range(kw):
                out[:, :, i : i + stride * h : stride, j : j + stride * wd : stride] += cols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)

        self.stride = stride
        return out + b[None, :, None, None]

    def backward(self, grad):
        x, w, _ = self.tensors
        _, _, kh, kw = w.shape
        s = self.stride
        windows = sliding_window_view(grad, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]

        dx = None
        if x.requires_grad:
            dx = np.tensordot(windows, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        dw = np.tensordot(x.data, windows, axes=([0, 2, 3], [0, 2, 3]))
        db = grad.sum(axis=(0, 2, 3))
        return dx, dw, db


@dataclass(frozen=True, eq=False)
class PoolIndices:
    """Arg-max positions of a 2x2 max-pool, flattened within each (height, width) plane."""

    input_shape: Tuple[int, int, int, int]
    flat: np.ndarray

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.flat.shape

    def window_offsets(self) -> Tuple[np.ndarray, np.ndarray]:
        """Row and column offset of every stored index inside its own window."""
        width = self.input_shape[3]
        oh = np.arange(self.flat.shape[2])[:, None]
        ow = np.arange(self.flat.shape[3])[None, :]
        return self.flat // width - 2 * oh, self.flat % width - 2 * ow

    def validate(self) -> None:
        dr, dc = self.window_offsets()
        if np.any((dr < 0) | (dr > 1) | (dc < 0) | (dc > 1)):
            raise DimensionError("Pool index points outside its window", op="max_unpool2d")


class MaxPool2d(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        _require_4d("maxpool2d", x=x)
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise DimensionError(
                "maxpool2d needs even spatial extents", op="maxpool2d", shapes={"x": x.shape}
            )
        windows = (
            x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        )
        # argmax returns the first maximum, so ties go to the row-major first cell
        arg = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

        oh = np.arange(h // 2)[:, None]
        ow = np.arange(w // 2)[None, :]
        flat = (2 * oh + arg // 2) * w + 2 * ow + arg % 2
        self.indices = PoolIndices(input_shape=x.shape, flat=flat.astype(np.int64))
        return out

    def backward(self, grad):
        n, c, h, w = self.indices.input_shape
        dx = np.zeros((n, c, h * w), dtype=grad.dtype)
        np.put_along_axis(dx, self.indices.flat.reshape(n, c, -1), grad.reshape(n, c, -1), axis=2)
        return (dx.reshape(n, c, h, w),)


class MaxUnpool2d(Function):
    def forward(self, x: np.ndarray, indices: PoolIndices) -> np.ndarray:
        if x.shape != indices.output_shape:
            raise DimensionError(
                "Pool indices do not match the tensor being unpooled",
                op="max_unpool2d",
                shapes={"x": x.shape, "indices": indices.output_shape},
            )
        n, c, h, w = indices.input_shape
        out = np.zeros((n, c, h * w), dtype=x.dtype)
        np.put_along_axis(out, indices.flat.reshape(n, c, -1), x.reshape(n, c, -1), axis=2)
        self.indices = indices
        return out.reshape(n, c, h, w)

    def backward(self, grad):
        n, c = grad.shape[:2]
        flat = self.indices.flat
        dx = np.take_along_axis(grad.reshape(n, c, -1), flat.reshape(n, c, -1), axis=2)
        return (dx.reshape(flat.shape),)


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    """Logistic function held inside the open interval (eps, 1 - eps) of the input dtype."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        eps = float(np.finfo(x.dtype).eps)
        self.out = np.clip(expit(x), eps, 1.0 - eps)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


class ConcatChannels(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _require_4d("concat_channels", a=a, b=b)
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise DimensionError(
                "concat_channels needs equal batch and spatial extents",
                op="concat_channels",
                shapes={"a": a.shape, "b": b.shape},
            )
        self.split = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, grad):
        return grad[:, : self.split], grad[:, self.split :]


class Dropout(Function):
    def forward(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        self.mask = mask
        return x * mask

    def backward(self, grad):
        return (grad * self.mask,)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 2) -> Tensor:
    return ConvTranspose2d.apply(x, weight, bias, stride=stride)


def maxpool2d(x: Tensor) -> Tuple[Tensor, PoolIndices]:
    """2x2, stride-2 max pooling; returns the pooled tensor and the arg-max indices."""
    out, func = MaxPool2d.apply_with_context(x)
    return out, func.indices


def max_unpool2d(x: Tensor, indices: PoolIndices) -> Tensor:
    return MaxUnpool2d.apply(x, indices=indices)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    return ConcatChannels.apply(a, b)


def dropout(
    x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1/(1-rate)."""
    if not 0 <= rate < 1:
        raise ContractError(f"Dropout rate {rate} outside [0, 1)", op="dropout")
    if not training or rate == 0:
        return x
    if rng is None:
        raise ContractError("Training-mode dropout needs a random generator", op="dropout")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return Dropout.apply(x, mask=mask)
