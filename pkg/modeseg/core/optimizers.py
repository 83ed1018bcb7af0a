"""Parameter update rules: Adam and SGD (with optional momentum)."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..autodiff import Tensor
from ..config.settings import OptimizerConfig
from .exceptions import NumericalError
from .layers import Module
from .normalization import ModeNorm2d

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Per-parameter moment buffers keyed by parameter name, plus the step count."""

    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def _check_grads(grads: Dict[str, np.ndarray]) -> None:
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"Gradient of '{name}' contains NaN or Inf", op="optimizer_step", layer=name
            )


def step_sgd(
    params: Dict[str, Tensor],
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
    cfg: OptimizerConfig,
) -> OptimizerState:
    """p <- p - lr * v with v <- momentum * v + g. Parameters without a gradient stay put."""
    _check_grads(grads)
    state.step += 1
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if cfg.momentum > 0:
            velocity = state.first_moment.get(name)
            velocity = grad if velocity is None else cfg.momentum * velocity + grad
            state.first_moment[name] = velocity
            grad = velocity
        param.data -= (cfg.learning_rate * grad).astype(param.dtype)
    return state


def step_adam(
    params: Dict[str, Tensor],
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
    cfg: OptimizerConfig,
) -> OptimizerState:
    """
    One bias-corrected Adam step.

    Moments live in float64 regardless of the parameter dtype. A zero gradient on
    the first step leaves the parameter unchanged.
    """
    _check_grads(grads)
    state.step += 1
    t = state.step
    correction1 = 1.0 - cfg.beta1**t
    correction2 = 1.0 - cfg.beta2**t
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        grad = grad.astype(np.float64)
        m = state.first_moment.get(name, np.zeros_like(grad))
        v = state.second_moment.get(name, np.zeros_like(grad))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad**2
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
        param.data -= update.astype(param.dtype)
    return state


_STEPS = {"adam": step_adam, "sgd": step_sgd}


class Optimizer:
    """
    Binds a step rule to named parameters and reads their ``.grad``.

    When built from a model, moment buffers of mode-normalized ``gamma``/``beta``
    rows follow the layers' mode reorders, so each buffer row stays with its mode.
    """

    kind = "sgd"

    def __init__(
        self,
        named_params: Iterable[Tuple[str, Tensor]],
        cfg: Optional[OptimizerConfig] = None,
        model: Optional[Module] = None,
    ):
        self.cfg = cfg or OptimizerConfig(kind=self.kind)
        self.params: Dict[str, Tensor] = dict(named_params)
        self.state = OptimizerState()
        self.model = model
        for _, layer in self._mode_layers():
            layer.pop_mode_order()

    def _mode_layers(self) -> List[Tuple[str, ModeNorm2d]]:
        if self.model is None:
            return []
        return [(prefix, m) for prefix, m in self.model.named_modules() if isinstance(m, ModeNorm2d)]

    def permute_rows(self, name: str, order: np.ndarray) -> None:
        """Reorder the moment rows of parameter ``name``; ``order`` is [K, C] of source rows."""
        for buffers in (self.state.first_moment, self.state.second_moment):
            if name in buffers:
                buffers[name] = np.take_along_axis(buffers[name], order, axis=0)

    def follow_mode_orders(self) -> None:
        for prefix, layer in self._mode_layers():
            order = layer.pop_mode_order()
            if order is None:
                continue
            for local in ("gamma", "beta"):
                self.permute_rows(f"{prefix}.{local}" if prefix else local, order)
            logger.debug(f"Permuted optimizer moments of {prefix or 'model'} after a mode reorder")

    @property
    def learning_rate(self) -> float:
        return self.cfg.learning_rate

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        self.follow_mode_orders()
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        _STEPS[self.kind](self.params, grads, self.state, self.cfg)


class SGD(Optimizer):
    kind = "sgd"


class Adam(Optimizer):
    kind = "adam"


def make_optimizer(model: Module, cfg: OptimizerConfig) -> Optimizer:
    """Optimizer of kind ``cfg.kind`` over every trainable parameter of ``model``."""
    optimizer_cls = Adam if cfg.kind == "adam" else SGD
    optimizer = optimizer_cls(model.named_parameters(), cfg, model=model)
    logger.debug(f"{optimizer_cls.__name__} over {len(optimizer.params)} tensors, lr={cfg.learning_rate:g}")
    return optimizer
