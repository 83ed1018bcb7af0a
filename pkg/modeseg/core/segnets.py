"""Mini U-Net and mini SegNet for binary water segmentation."""

import logging
from typing import List, Optional, Union

import numpy as np

from ..autodiff import (
    Tensor,
    concat_channels,
    dropout,
    max_unpool2d,
    maxpool2d,
    relu,
    sigmoid,
)
from ..config.settings import ModelSpec, NormConfig
from .exceptions import ConfigurationError, NumericalError
from .layers import Conv2d, ConvTranspose2d, Module, ModuleList
from .normalization import ModeNorm2d, make_norm

logger = logging.getLogger(__name__)


class ConvBlock(Module):
    """3x3 convolution (padding 1) -> normalization -> ReLU."""

    def __init__(self, in_channels: int, out_channels: int, norm: NormConfig, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, rng, padding=1)
        self.norm = make_norm(out_channels, norm)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.norm(self.conv(x)))


class DoubleConv(Module):
    def __init__(self, in_channels: int, out_channels: int, norm: NormConfig, rng: np.random.Generator, mid_channels: Optional[int] = None):
        super().__init__()
        mid = mid_channels or out_channels
        self.first = ConvBlock(in_channels, mid, norm, rng)
        self.second = ConvBlock(mid, out_channels, norm, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


class SegmentationNet(Module):
    """Shared plumbing: spec checks, dropout stream and mixture freezing."""

    def __init__(self, spec: ModelSpec, seed: int):
        super().__init__()
        self.spec = spec
        self.seed = seed
        self._dropout_rng = np.random.default_rng([seed, 1])

    def reseed_dropout(self, seed: int) -> None:
        self._dropout_rng = np.random.default_rng([seed, 1])

    def set_mixture_updates(self, enabled: bool) -> None:
        for _, module in self.named_modules():
            if isinstance(module, ModeNorm2d):
                module.update_mixture = enabled

    def _drop(self, x: Tensor) -> Tensor:
        return dropout(x, self.spec.dropout_rate, self.training, self._dropout_rng)

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(
                "Model input must be [N, 1, T, T]",
                config_field="input",
                provided_value=x.shape,
            )
        for extent in x.shape[2:]:
            self.spec.check_tile_size(extent)
        if not np.all(np.isfinite(x.data)):
            raise NumericalError("Model input contains NaN or Inf", op="forward", layer="input")


class MiniUNet(SegmentationNet):
    """
    Encoder-decoder with skip connections.

    Each encoder level is two ConvBlocks followed by 2x2 max-pooling, doubling channels
    per level; the decoder upsamples with 2x2 stride-2 transposed convolutions, concatenates
    the matching encoder features and refines with two ConvBlocks. A 1x1 convolution and a
    sigmoid produce the water probability.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        super().__init__(spec, seed)
        rng = np.random.default_rng(seed)
        widths = [spec.base_channels * 2**level for level in range(spec.depth + 1)]

        self.encoders = ModuleList()
        in_channels = spec.in_channels
        for level in range(spec.depth):
            self.encoders.append(DoubleConv(in_channels, widths[level], spec.norm, rng))
            in_channels = widths[level]
        self.bottleneck = DoubleConv(widths[-2], widths[-1], spec.norm, rng)

        self.upconvs = ModuleList()
        self.decoders = ModuleList()
        for level in reversed(range(spec.depth)):
            self.upconvs.append(ConvTranspose2d(widths[level + 1], widths[level], rng))
            self.decoders.append(DoubleConv(2 * widths[level], widths[level], spec.norm, rng))
        self.head = Conv2d(widths[0], spec.out_channels, 1, rng)
        self.assign_paths()

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        skips: List[Tensor] = []
        h = x
        for encoder in self.encoders:
            h = encoder(h)
            skips.append(h)
            h, _ = maxpool2d(h)
            h = self._drop(h)

        h = self.bottleneck(h)
        for upconv, decoder, skip in zip(self.upconvs, self.decoders, reversed(skips)):
            h = decoder(concat_channels(skip, upconv(h)))
        return sigmoid(self.head(h))


class MiniSegNet(SegmentationNet):
    """
    Encoder-decoder without skip concatenations.

    The encoder stores the arg-max positions of every 2x2 pooling; the decoder places
    values back at those positions with max-unpooling before two ConvBlocks per level.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        super().__init__(spec, seed)
        rng = np.random.default_rng(seed)
        widths = [spec.base_channels * 2**level for level in range(spec.depth)]

        self.encoders = ModuleList()
        in_channels = spec.in_channels
        for level in range(spec.depth):
            self.encoders.append(DoubleConv(in_channels, widths[level], spec.norm, rng))
            in_channels = widths[level]

        self.decoders = ModuleList()
        for level in reversed(range(spec.depth)):
            out = widths[level - 1] if level > 0 else widths[0]
            self.decoders.append(DoubleConv(widths[level], out, spec.norm, rng, mid_channels=widths[level]))
        self.head = Conv2d(widths[0], spec.out_channels, 1, rng)
        self.assign_paths()

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        indices = []
        h = x
        for encoder in self.encoders:
            h, idx = maxpool2d(encoder(h))
            indices.append(idx)
            h = self._drop(h)

        for decoder, idx in zip(self.decoders, reversed(indices)):
            h = decoder(max_unpool2d(h, idx))
        return sigmoid(self.head(h))


SegModel = Union[MiniUNet, MiniSegNet]


def build_unet(spec: ModelSpec, seed: int = 0) -> MiniUNet:
    if spec.arch != "unet":
        raise ConfigurationError("build_unet needs arch='unet'", config_field="model.arch", provided_value=spec.arch)
    return MiniUNet(spec, seed)


def build_segnet(spec: ModelSpec, seed: int = 0) -> MiniSegNet:
    if spec.arch != "segnet":
        raise ConfigurationError("build_segnet needs arch='segnet'", config_field="model.arch", provided_value=spec.arch)
    return MiniSegNet(spec, seed)


def build_model(spec: ModelSpec, seed: int = 0) -> SegModel:
    """Build the architecture named by ``spec.arch``."""
    model = build_unet(spec, seed) if spec.arch == "unet" else build_segnet(spec, seed)
    logger.debug(f"Built {spec.label} with {model.parameter_count()} parameters")
    return model


def forward(model: SegModel, x: Union[Tensor, np.ndarray], training: bool) -> Tensor:
    """Probability map for standardized tiles; ``training`` selects statistics and dropout."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    model.train(training)
    out = model(x)
    if not np.all(np.isfinite(out.data)):
        raise NumericalError("Model produced non-finite probabilities", op="forward", layer="head")
    return out
