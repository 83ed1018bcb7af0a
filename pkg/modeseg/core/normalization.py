"""
Batch normalization and mode normalization.

Mode normalization treats every activation of a channel as a sample from a K-mode
Gaussian mixture. Mixture parameters are estimated by EM outside the gradient path,
each activation is assigned to its highest-posterior mode, and it is standardized
with that mode's within-batch partition statistics before a mode-specific affine map.
With a single mode this is exactly batch normalization.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from ..autodiff import Function, Tensor, get_default_dtype
from ..config.settings import NormConfig
from .exceptions import CheckpointError, ContractError, DimensionError
from .layers import Identity, Module

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-8
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class BatchStats:
    """Per-channel batch statistics and their running averages."""

    channels: int
    mu: np.ndarray = None
    var: np.ndarray = None
    running_mu: np.ndarray = None
    running_var: np.ndarray = None
    count: int = 0

    def __post_init__(self):
        dtype = get_default_dtype()
        if self.running_mu is None:
            self.running_mu = np.zeros(self.channels, dtype=dtype)
        if self.running_var is None:
            self.running_var = np.ones(self.channels, dtype=dtype)
        if self.mu is None:
            self.mu = np.zeros(self.channels, dtype=dtype)
        if self.var is None:
            self.var = np.ones(self.channels, dtype=dtype)


@dataclass
class AffineParams:
    """Learnable scale and shift, one row per mode: gamma and beta are [K, C]."""

    gamma: Tensor
    beta: Tensor

    @classmethod
    def create(cls, modes: int, channels: int) -> "AffineParams":
        return cls(
            gamma=Tensor(np.ones((modes, channels)), requires_grad=True, name="gamma"),
            beta=Tensor(np.zeros((modes, channels)), requires_grad=True, name="beta"),
        )

    @property
    def modes(self) -> int:
        return self.gamma.shape[0]


@dataclass
class MixtureState:
    """Per-channel K-mode Gaussian mixture plus running copies used at inference."""

    modes: int
    channels: int
    pi: np.ndarray = None
    mu: np.ndarray = None
    var: np.ndarray = None
    running_pi: np.ndarray = None
    running_mu: np.ndarray = None
    running_var: np.ndarray = None
    initialized: bool = False
    dtype: np.dtype = field(default_factory=get_default_dtype)
    # composed reorders not yet applied to optimizer state, [K, C] of source indices
    pending_order: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        shape = (self.modes, self.channels)
        for name, fill in (("pi", 1.0 / self.modes), ("mu", 0.0), ("var", 1.0)):
            if getattr(self, name) is None:
                setattr(self, name, np.full(shape, fill, dtype=self.dtype))
            if getattr(self, "running_" + name) is None:
                setattr(self, "running_" + name, np.full(shape, fill, dtype=self.dtype))

    def copy_from(self, other: "MixtureState") -> None:
        for name in ("pi", "mu", "var", "running_pi", "running_mu", "running_var"):
            setattr(self, name, getattr(other, name).astype(self.dtype))
        self.initialized = other.initialized

    def permute(self, order: np.ndarray) -> None:
        """Reorder modes per channel; ``order`` is [K, C] of source mode indices."""
        for name in ("pi", "mu", "var", "running_pi", "running_mu", "running_var"):
            setattr(self, name, np.take_along_axis(getattr(self, name), order, axis=0))
        if self.pending_order is None:
            self.pending_order = order
        else:
            self.pending_order = np.take_along_axis(self.pending_order, order, axis=0)

    def check(self) -> None:
        """Raise ContractError when the mixture invariants are broken."""
        if np.any(self.pi < 0) or np.any(np.abs(self.pi.sum(axis=0) - 1) > 1e-6):
            raise ContractError("Mixture weights are not a simplex", op="mixture")
        if np.any(self.var <= 0):
            raise ContractError("Mixture variances must be positive", op="mixture")
        if np.any(np.diff(self.mu, axis=0) < 0):
            raise ContractError("Modes are not sorted by mean", op="mixture")


def _channel_samples(x: np.ndarray) -> np.ndarray:
    """[N, C, H, W] -> [C, N*H*W] in float64."""
    if x.ndim != 4:
        raise DimensionError("Normalization expects 4-D input", op="normalization", shapes={"x": x.shape})
    return x.transpose(1, 0, 2, 3).reshape(x.shape[1], -1).astype(np.float64)


def _log_joint(samples: np.ndarray, pi: np.ndarray, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """log pi_k + log N(x | mu_k, var_k) for samples [C, M]; returns [K, C, M]."""
    pi, mu, var = (np.asarray(a, dtype=np.float64)[..., None] for a in (pi, mu, var))
    return (
        np.log(np.maximum(pi, 1e-300))
        - 0.5 * (_LOG_2PI + np.log(var))
        - 0.5 * (samples[None] - mu) ** 2 / var
    )


def _em_step(samples: np.ndarray, pi: np.ndarray, mu: np.ndarray, var: np.ndarray, min_weight: float):
    """One E step and one M step; returns updated (pi, mu, var) in float64."""
    log_joint = _log_joint(samples, pi, mu, var)
    resp = np.exp(log_joint - logsumexp(log_joint, axis=0, keepdims=True))

    nk = resp.sum(axis=-1)
    alive = nk > 1e-12
    safe = np.where(alive, nk, 1.0)
    new_mu = np.where(alive, (resp * samples[None]).sum(axis=-1) / safe, mu)
    new_var = np.where(
        alive, (resp * (samples[None] - new_mu[..., None]) ** 2).sum(axis=-1) / safe, var
    )
    new_var = np.maximum(new_var, VAR_FLOOR)
    new_pi = nk / samples.shape[1]

    _reseed_light_modes(new_pi, new_mu, new_var, min_weight)
    return new_pi, new_mu, new_var


def _reseed_light_modes(pi: np.ndarray, mu: np.ndarray, var: np.ndarray, min_weight: float) -> None:
    """Split the heaviest mode into any mode whose weight fell below ``min_weight`` (in place)."""
    modes, channels = pi.shape
    if modes == 1:
        pi[:] = 1.0
        return
    for c in np.nonzero((pi < min_weight).any(axis=0))[0]:
        for k in np.nonzero(pi[:, c] < min_weight)[0]:
            heavy = int(np.argmax(pi[:, c]))
            std = float(np.sqrt(var[heavy, c]))
            mu[k, c] = mu[heavy, c] + (std if k > heavy else -std)
            var[k, c] = var[heavy, c]
            pi[heavy, c] /= 2.0
            pi[k, c] = pi[heavy, c]
            logger.debug(f"Re-seeded mode {k} of channel {c} from mode {heavy}")
        pi[:, c] /= pi[:, c].sum()


def init_mixture(first_batch: Union[Tensor, np.ndarray], modes: int, cfg: NormConfig) -> MixtureState:
    """Quantile-spread initial mixture: means at quantiles (2k+1)/(2K), batch variance, uniform weights."""
    x = first_batch.data if isinstance(first_batch, Tensor) else np.asarray(first_batch)
    samples = _channel_samples(x)
    channels = samples.shape[0]

    if modes == 1:
        mu = samples.mean(axis=1, keepdims=True).T
    else:
        q = (2 * np.arange(modes) + 1) / (2.0 * modes)
        mu = np.quantile(samples, q, axis=1)
    var = np.repeat(np.maximum(samples.var(axis=1), VAR_FLOOR)[None], modes, axis=0)
    pi = np.full((modes, channels), 1.0 / modes)

    dtype = x.dtype
    return MixtureState(
        modes=modes,
        channels=channels,
        pi=pi.astype(dtype),
        mu=mu.astype(dtype),
        var=var.astype(dtype),
        running_pi=pi.astype(dtype),
        running_mu=mu.astype(dtype),
        running_var=var.astype(dtype),
        initialized=True,
        dtype=dtype,
    )


def em_update(
    x: Union[Tensor, np.ndarray],
    state: MixtureState,
    cfg: NormConfig,
    affine: Optional[AffineParams] = None,
) -> np.ndarray:
    """
    Refine the mixture on one training batch and return responsibilities [K, N, C, H, W].

    Runs ``cfg.em_iters`` EM steps warm-started from ``state``, re-seeds modes lighter
    than ``cfg.min_mode_weight``, sorts modes by mean (permuting running copies and the
    affine rows with them), then blends the running copies with ``cfg.momentum``.
    """
    if not state.initialized:
        raise ContractError("em_update needs an initialized mixture", op="em_update")
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    samples = _channel_samples(data)

    pi = state.pi.astype(np.float64)
    mu = state.mu.astype(np.float64)
    var = state.var.astype(np.float64)
    for _ in range(cfg.em_iters):
        pi, mu, var = _em_step(samples, pi, mu, var, cfg.min_mode_weight)

    order = np.argsort(mu, axis=0, kind="stable")
    if np.any(order != np.arange(state.modes)[:, None]):
        logger.debug("Re-ordering modes by mean")
        pi, mu, var = (np.take_along_axis(a, order, axis=0) for a in (pi, mu, var))
        state.permute(order)
        if affine is not None:
            affine.gamma.data = np.take_along_axis(affine.gamma.data, order, axis=0)
            affine.beta.data = np.take_along_axis(affine.beta.data, order, axis=0)

    state.pi = (pi / pi.sum(axis=0, keepdims=True)).astype(state.dtype)
    state.mu = mu.astype(state.dtype)
    state.var = var.astype(state.dtype)

    m = cfg.momentum
    state.running_pi = ((1 - m) * state.running_pi + m * pi).astype(state.dtype)
    state.running_mu = ((1 - m) * state.running_mu + m * mu).astype(state.dtype)
    state.running_var = ((1 - m) * state.running_var + m * var).astype(state.dtype)

    log_joint = _log_joint(samples, state.pi, state.mu, state.var)
    resp = np.exp(log_joint - logsumexp(log_joint, axis=0, keepdims=True))
    n, c, h, w = data.shape
    return resp.reshape(state.modes, c, n, h, w).transpose(0, 2, 1, 3, 4)


def assign_modes(
    x: Union[Tensor, np.ndarray], state: MixtureState, running: bool = False
) -> np.ndarray:
    """Highest-posterior mode per activation, [N, C, H, W]; ties go to the lower index."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim != 4 or data.shape[1] != state.channels:
        raise DimensionError(
            "Input channels do not match the mixture",
            op="assign_modes",
            shapes={"x": data.shape},
            context={"channels": state.channels},
        )
    if running:
        pi, mu, var = state.running_pi, state.running_mu, state.running_var
    else:
        pi, mu, var = state.pi, state.mu, state.var

    pi, mu, var = (np.asarray(a, dtype=np.float64)[:, None, :, None, None] for a in (pi, mu, var))
    log_joint = (
        np.log(np.maximum(pi, 1e-300))
        - 0.5 * np.log(var)
        - 0.5 * (data.astype(np.float64)[None] - mu) ** 2 / var
    )
    return log_joint.argmax(axis=0)


class BatchNormTrain(Function):
    """Standardize with per-channel batch statistics, then scale and shift."""

    def forward(self, x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float) -> np.ndarray:
        c = x.shape[1]
        self.count = x.size // c
        self.batch_mu = x.mean(axis=(0, 2, 3))
        self.batch_var = x.var(axis=(0, 2, 3))
        self.inv = 1.0 / np.sqrt(self.batch_var + eps)
        self.xhat = (x - self.batch_mu[None, :, None, None]) * self.inv[None, :, None, None]
        return gamma[0][None, :, None, None] * self.xhat + beta[0][None, :, None, None]

    def backward(self, grad):
        _, gamma, _ = self.tensors
        m = self.count
        dgamma = (grad * self.xhat).sum(axis=(0, 2, 3))[None]
        dbeta = grad.sum(axis=(0, 2, 3))[None]
        dxhat = grad * gamma.data[0][None, :, None, None]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * self.xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = self.inv[None, :, None, None] / m * (m * dxhat - s1 - self.xhat * s2)
        return dx, dgamma, dbeta


class FixedNorm(Function):
    """Affine normalization with constant statistics selected per activation by ``groups``."""

    def forward(self, x, gamma, beta, groups: np.ndarray, mu: np.ndarray, var: np.ndarray, eps: float):
        self.groups = groups
        self.inv = (1.0 / np.sqrt(var.reshape(-1) + eps))[groups]
        self.xhat = (x - mu.reshape(-1)[groups]) * self.inv
        return gamma.reshape(-1)[groups] * self.xhat + beta.reshape(-1)[groups]

    def backward(self, grad):
        _, gamma, _ = self.tensors
        size = gamma.size
        flat = self.groups.ravel()
        dgamma = np.bincount(flat, weights=(grad * self.xhat).ravel(), minlength=size)
        dbeta = np.bincount(flat, weights=grad.ravel(), minlength=size)
        dx = grad * gamma.data.reshape(-1)[self.groups] * self.inv
        return dx, dgamma.reshape(gamma.shape), dbeta.reshape(gamma.shape)


class PartitionNorm(Function):
    """
    Standardize every (mode, channel) partition with its own within-batch statistics.

    ``groups`` holds k * C + c for each activation. The assignment is constant with
    respect to differentiation; gradients flow through the partition statistics.
    """

    def forward(self, x, gamma, beta, groups: np.ndarray, eps: float):
        size = gamma.size
        flat = groups.ravel()
        counts = np.bincount(flat, minlength=size).astype(np.float64)
        denom = np.maximum(counts, 1.0)
        mean = np.bincount(flat, weights=x.ravel(), minlength=size) / denom
        centered = x - mean[groups].astype(x.dtype)
        var = np.bincount(flat, weights=(centered**2).ravel(), minlength=size) / denom

        self.groups = groups
        self.counts = counts
        self.partition_mu = mean
        self.partition_var = var
        self.inv = (1.0 / np.sqrt(var + eps))[groups].astype(x.dtype)
        self.xhat = centered * self.inv
        return gamma.reshape(-1)[groups] * self.xhat + beta.reshape(-1)[groups]

    def backward(self, grad):
        _, gamma, _ = self.tensors
        size = gamma.size
        groups = self.groups
        flat = groups.ravel()

        dgamma = np.bincount(flat, weights=(grad * self.xhat).ravel(), minlength=size)
        dbeta = np.bincount(flat, weights=grad.ravel(), minlength=size)
        dxhat = grad * gamma.data.reshape(-1)[groups]
        s1 = np.bincount(flat, weights=dxhat.ravel(), minlength=size)[groups]
        s2 = np.bincount(flat, weights=(dxhat * self.xhat).ravel(), minlength=size)[groups]
        m = self.counts[groups]
        dx = self.inv / m * (m * dxhat - s1 - self.xhat * s2)
        return dx, dgamma.reshape(gamma.shape), dbeta.reshape(gamma.shape)


def _group_ids(assign: np.ndarray, channels: int) -> np.ndarray:
    return assign * channels + np.arange(channels)[None, :, None, None]


def batch_norm_forward(
    x: Tensor, stats: BatchStats, affine: AffineParams, cfg: NormConfig, training: bool
) -> Tensor:
    """Batch normalization; training updates running statistics in ``stats``."""
    if x.ndim != 4 or x.shape[1] != stats.channels or affine.gamma.shape != (1, stats.channels):
        raise DimensionError(
            "Batch norm input does not match its statistics",
            op="batch_norm",
            shapes={"x": x.shape, "gamma": affine.gamma.shape},
        )
    if not training:
        groups = np.broadcast_to(np.arange(stats.channels)[None, :, None, None], x.shape)
        return FixedNorm.apply(
            x,
            affine.gamma,
            affine.beta,
            groups=groups,
            mu=stats.running_mu,
            var=stats.running_var,
            eps=cfg.epsilon,
        )

    out, func = BatchNormTrain.apply_with_context(x, affine.gamma, affine.beta, eps=cfg.epsilon)
    m = cfg.momentum
    stats.mu = func.batch_mu
    stats.var = func.batch_var
    stats.count = func.count
    stats.running_mu = ((1 - m) * stats.running_mu + m * func.batch_mu).astype(stats.running_mu.dtype)
    stats.running_var = ((1 - m) * stats.running_var + m * func.batch_var).astype(
        stats.running_var.dtype
    )
    return out


def mode_norm_forward(
    x: Tensor,
    state: MixtureState,
    affine: AffineParams,
    cfg: NormConfig,
    training: bool,
    update: bool = True,
) -> Tensor:
    """
    Mode normalization.

    In training the mixture is initialized on the first batch and refined by EM
    (unless ``update`` is False), and activations are standardized with within-batch
    partition statistics. Inference uses the running mixture only, so the output does
    not depend on batch composition.
    """
    if x.ndim != 4 or x.shape[1] != state.channels or affine.gamma.shape != (state.modes, state.channels):
        raise DimensionError(
            "Mode norm input does not match its mixture",
            op="mode_norm",
            shapes={"x": x.shape, "gamma": affine.gamma.shape},
        )

    if training:
        if not state.initialized:
            state.copy_from(init_mixture(x, state.modes, cfg))
        if update:
            em_update(x, state, cfg, affine)
        groups = _group_ids(assign_modes(x, state), state.channels)
        return PartitionNorm.apply(x, affine.gamma, affine.beta, groups=groups, eps=cfg.epsilon)

    if not state.initialized:
        raise ContractError(
            "Mode normalization needs at least one training batch before inference",
            op="mode_norm",
        )
    groups = _group_ids(assign_modes(x, state, running=True), state.channels)
    return FixedNorm.apply(
        x,
        affine.gamma,
        affine.beta,
        groups=groups,
        mu=state.running_mu,
        var=state.running_var,
        eps=cfg.epsilon,
    )


class BatchNorm2d(Module):
    def __init__(self, channels: int, cfg: NormConfig):
        super().__init__()
        self.cfg = cfg
        affine = AffineParams.create(1, channels)
        self.gamma = affine.gamma
        self.beta = affine.beta
        self.stats = BatchStats(channels)

    @property
    def affine(self) -> AffineParams:
        return AffineParams(self.gamma, self.beta)

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm_forward(x, self.stats, self.affine, self.cfg, self.training)

    def _local_buffers(self):
        return {"running_mu": self.stats.running_mu, "running_var": self.stats.running_var}

    def _load_local_buffer(self, name, value):
        if name in ("running_mu", "running_var"):
            setattr(self.stats, name, value.astype(self.gamma.dtype))
        else:
            super()._load_local_buffer(name, value)


class ModeNorm2d(Module):
    """Mode normalization layer; ``update_mixture=False`` freezes the mixture during training."""

    _BUFFERS = ("pi", "mu", "var", "running_pi", "running_mu", "running_var")

    def __init__(self, channels: int, cfg: NormConfig):
        super().__init__()
        self.cfg = cfg
        affine = AffineParams.create(cfg.modes, channels)
        self.gamma = affine.gamma
        self.beta = affine.beta
        self.state = MixtureState(cfg.modes, channels)
        self.update_mixture = True

    @property
    def affine(self) -> AffineParams:
        return AffineParams(self.gamma, self.beta)

    def forward(self, x: Tensor) -> Tensor:
        return mode_norm_forward(
            x, self.state, self.affine, self.cfg, self.training, update=self.update_mixture
        )

    def pop_mode_order(self) -> Optional[np.ndarray]:
        """Row permutation applied to ``gamma``/``beta`` since the last call, or None."""
        order, self.state.pending_order = self.state.pending_order, None
        return order

    def _local_buffers(self):
        buffers = {name: getattr(self.state, name) for name in self._BUFFERS}
        buffers["initialized"] = np.array([float(self.state.initialized)], dtype=self.gamma.dtype)
        return buffers

    def _load_local_buffer(self, name, value):
        if name == "initialized":
            self.state.initialized = bool(value.reshape(-1)[0])
        elif name in self._BUFFERS:
            if value.shape != (self.state.modes, self.state.channels):
                raise CheckpointError(
                    f"Mixture buffer '{name}' has the wrong shape",
                    parameter=f"{self.path}.{name}",
                    context={"shape": value.shape},
                )
            setattr(self.state, name, value.astype(self.state.dtype))
        else:
            super()._load_local_buffer(name, value)


def make_norm(channels: int, cfg: NormConfig) -> Module:
    """Normalization layer for ``cfg.kind``: none, batch or mode."""
    if cfg.kind == "batch":
        return BatchNorm2d(channels, cfg)
    if cfg.kind == "mode":
        return ModeNorm2d(channels, cfg)
    return Identity()


@dataclass
class MixtureFit:
    """Result of fitting a 1-D Gaussian mixture to a sample."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    iterations: int


def fit_mixture(
    values: np.ndarray,
    modes: int = 2,
    n_iter: int = 200,
    tol: float = 1e-8,
    min_mode_weight: float = 1e-3,
) -> MixtureFit:
    """
    Fit a 1-D K-mode Gaussian mixture with the same EM the mode-normalization layers use.

    Useful for histogram analysis of backscatter scenes; modes are returned sorted by mean.
    """
    samples = np.asarray(values, dtype=np.float64).reshape(1, -1)
    samples = samples[:, np.isfinite(samples[0])]
    if samples.shape[1] < modes:
        raise ContractError("Not enough finite samples to fit the mixture", op="fit_mixture")

    cfg = NormConfig(kind="mode", modes=modes, min_mode_weight=min_mode_weight)
    init = init_mixture(samples.reshape(1, 1, 1, -1), modes, cfg)
    pi, mu, var = (a.astype(np.float64) for a in (init.pi, init.mu, init.var))

    previous = -np.inf
    iterations = 0
    for iterations in range(1, n_iter + 1):
        pi, mu, var = _em_step(samples, pi, mu, var, min_mode_weight)
        ll = float(logsumexp(_log_joint(samples, pi, mu, var), axis=0).sum())
        if abs(ll - previous) < tol * max(1.0, abs(ll)):
            break
        previous = ll

    order = np.argsort(mu[:, 0], kind="stable")
    return MixtureFit(
        weights=pi[order, 0],
        means=mu[order, 0],
        variances=var[order, 0],
        log_likelihood=ll,
        iterations=iterations,
    )
