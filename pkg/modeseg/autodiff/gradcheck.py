"""Central finite-difference gradient checking."""

from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-based relative error, robust to gradients that are mostly zero."""
    diff = np.linalg.norm((analytic - numeric).ravel())
    scale = np.linalg.norm(analytic.ravel()) + np.linalg.norm(numeric.ravel())
    return float(diff / max(scale, 1e-12))


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-6) -> np.ndarray:
    """
    Estimate d fn() / d tensor by central differences.

    ``fn`` must return a scalar tensor and is evaluated twice per element of ``tensor``,
    which is perturbed in place and restored afterwards.
    """
    data = tensor.data
    grad = np.zeros_like(data, dtype=np.float64)
    with no_grad():
        for idx in np.ndindex(*data.shape):
            original = data[idx]
            data[idx] = original + eps
            plus = float(fn().data)
            data[idx] = original - eps
            minus = float(fn().data)
            data[idx] = original
            grad[idx] = (plus - minus) / (2 * eps)
    return grad


@dataclass
class GradCheckResult:
    errors: List[float] = field(default_factory=list)
    names: List[str] = field(default_factory=list)
    tolerance: float = 1e-5

    @property
    def worst(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def failures(self) -> List[str]:
        return [f"{n}: {e:.3e}" for n, e in zip(self.names, self.errors) if e > self.tolerance]


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-6,
    tolerance: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic gradients of ``fn`` against central differences for each tensor."""
    for t in tensors:
        t.zero_grad()
    fn().backward()

    result = GradCheckResult(tolerance=tolerance)
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(fn, t, eps=eps)
        result.errors.append(relative_error(analytic.astype(np.float64), numeric))
        result.names.append(t.name or f"input_{i}")
    return result
