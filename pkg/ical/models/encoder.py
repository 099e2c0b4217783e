"""DenseNet encoder.

Stem (7x7 conv stride 2, 3x3 max pool stride 2), then ``num_blocks`` dense blocks
separated by transitions that halve channels and resolution, then a 1x1 projection
to ``d_model``. The total stride is 16 for three blocks.

Every stage carries the validity mask of its grid. Activations are zeroed on padded
cells before each convolution and batch statistics skip them, so the features of a
valid cell do not depend on how much padding surrounds the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ical.autograd import functional as F
from ical.autograd.nn import BatchNorm2d, Conv2d, Dropout, LayerNorm, Module, ModuleList
from ical.autograd.random import SeedTree
from ical.autograd.tensor import Tensor
from ical.errors import ShapeError
from ical.presets import EncoderConfig

MIN_EXTENT = 16


@dataclass
class FeatureGrid:
    """Encoder output: ``features`` is ``(B, d_model, H, W)``, ``mask`` is ``(B, H, W)``."""

    features: Tensor
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape[1], self.mask.shape[2]

    def flatten(self) -> tuple[Tensor, np.ndarray]:
        """Returns ``(B, H*W, d_model)`` memory and its ``(B, H*W)`` mask."""
        b, d, h, w = self.features.shape
        memory = self.features.reshape(b, d, h * w).transpose(0, 2, 1)
        return memory, self.mask.reshape(b, h * w)


def apply_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    return x * Tensor(mask[:, None, :, :].astype(x.dtype))


def downsample_mask(mask: np.ndarray) -> np.ndarray:
    return mask[:, ::2, ::2]


def masked_avg_pool2(x: Tensor, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """2x2 stride-2 average over valid cells; odd extents are padded up (ceil)."""
    b, c, h, w = x.shape
    ph, pw = h % 2, w % 2
    m = np.pad(mask, ((0, 0), (0, ph), (0, pw))).astype(x.dtype)
    x = F.pad(apply_mask(x, mask), ((0, 0), (0, 0), (0, ph), (0, pw)))
    h2, w2 = (h + ph) // 2, (w + pw) // 2
    summed = x.reshape(b, c, h2, 2, w2, 2).sum(axis=(3, 5))
    count = m.reshape(b, h2, 2, w2, 2).sum(axis=(2, 4))
    out = summed * Tensor((1.0 / np.maximum(count, 1.0))[:, None, :, :].astype(x.dtype))
    return out, count > 0


class BottleneckLayer(Module):
    def __init__(self, in_channels: int, growth: int, dropout: float, seeds: SeedTree) -> None:
        super().__init__()
        self.norm1 = BatchNorm2d(in_channels)
        self.conv1 = Conv2d(in_channels, 4 * growth, 1, seeds("conv1"), bias=False)
        self.norm2 = BatchNorm2d(4 * growth)
        self.conv2 = Conv2d(4 * growth, growth, 3, seeds("conv2"), padding=1, bias=False)
        self.drop = Dropout(dropout, seeds("dropout"))

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        out = self.conv1(apply_mask(self.norm1(x, mask).relu(), mask))
        out = self.conv2(apply_mask(self.norm2(out, mask).relu(), mask))
        return self.drop(out)


class DenseBlock(Module):
    """``layers`` bottleneck layers, each fed the concatenation of all earlier outputs."""

    def __init__(self, in_channels: int, layers: int, growth: int, dropout: float, seeds: SeedTree) -> None:
        super().__init__()
        self.layers = ModuleList(
            [
                BottleneckLayer(in_channels + i * growth, growth, dropout, seeds.child("layers", i))
                for i in range(layers)
            ]
        )
        self.out_channels = in_channels + layers * growth

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        for layer in self.layers:
            x = F.concat([x, layer(x, mask)], axis=1)
        return x


class Transition(Module):
    def __init__(self, in_channels: int, seeds: SeedTree) -> None:
        super().__init__()
        self.out_channels = in_channels // 2
        self.norm = BatchNorm2d(in_channels)
        self.conv = Conv2d(in_channels, self.out_channels, 1, seeds("conv"), bias=False)

    def forward(self, x: Tensor, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
        out = self.conv(apply_mask(self.norm(x, mask).relu(), mask))
        return masked_avg_pool2(out, mask)


class DenseEncoder(Module):
    def __init__(self, config: EncoderConfig, seeds: SeedTree) -> None:
        super().__init__()
        self.config = config
        g = config.growth_rate
        self.stem = Conv2d(1, 2 * g, 7, seeds("stem"), stride=2, padding=3, bias=False)
        self.stem_norm = BatchNorm2d(2 * g)
        channels = 2 * g
        blocks, transitions = [], []
        for i in range(config.num_blocks):
            block = DenseBlock(channels, config.layers_per_block, g, config.dropout, seeds.child("blocks", i))
            blocks.append(block)
            channels = block.out_channels
            if i < config.num_blocks - 1:
                transition = Transition(channels, seeds.child("transitions", i))
                transitions.append(transition)
                channels = transition.out_channels
        self.blocks = ModuleList(blocks)
        self.transitions = ModuleList(transitions)
        self.out_norm = BatchNorm2d(channels)
        self.proj = Conv2d(channels, config.d_model, 1, seeds("proj"))
        self.proj_norm = LayerNorm(config.d_model)
        self.feature_channels = channels

    def forward(self, images: Tensor | np.ndarray, mask: np.ndarray) -> FeatureGrid:
        """Encodes ``(B, 1, H0, W0)`` images with their ``(B, H0, W0)`` validity mask.

        Raises:
            ShapeError: for a non-grayscale input, a mask of another shape, or an
                image smaller than 16 x 16.
        """
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.stem.weight.dtype))
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"encoder expects (B, 1, H, W) images, got {x.shape}")
        if mask.shape != (x.shape[0], *x.shape[2:]):
            raise ShapeError(f"image mask {mask.shape} does not match images {x.shape}")
        if min(x.shape[2:]) < MIN_EXTENT:
            raise ShapeError(f"image {x.shape[2:]} smaller than {MIN_EXTENT}x{MIN_EXTENT}")

        x = self.stem(apply_mask(x, mask))
        mask = downsample_mask(mask)
        x = apply_mask(self.stem_norm(x, mask).relu(), mask)
        x = F.max_pool2d(x, 3, stride=2, padding=1)
        mask = downsample_mask(mask)
        for i, block in enumerate(self.blocks):
            x = block(x, mask)
            if i < len(self.transitions):
                x, mask = self.transitions[i](x, mask)
        x = apply_mask(self.out_norm(x, mask).relu(), mask)
        x = self.proj(x)
        x = self.proj_norm(x.transpose(0, 2, 3, 1)).transpose(0, 3, 1, 2)
        return FeatureGrid(apply_mask(x, mask), mask)
