"""Multi-scale multi-patch image discriminators.

Three critics: a global one, a patch grid at full resolution, and a patch
grid on the 2x-downsampled image.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from latentdrive.codec.layers import LRELU_SLOPE, ResBlockDown


def _widths(stem: int, count: int, cap: int) -> list[int]:
    return [min(cap, stem * 2 ** (i + 1)) for i in range(count)]


class GlobalDiscriminator(nn.Module):
    """Full image -> single score."""

    def __init__(self, image_size: int, stem_width: int, cap: int):
        super().__init__()
        blocks = int(math.log2(image_size // 4))
        widths = _widths(stem_width, blocks, cap)
        self.stem = nn.Conv2d(3, stem_width, 3, padding=1)
        prev = stem_width
        mods = []
        for w in widths:
            mods.append(ResBlockDown(prev, w))
            prev = w
        self.blocks = nn.ModuleList(mods)
        self.final_conv = nn.Conv2d(prev, prev, 3, padding=1)
        self.fc1 = nn.Linear(prev * 16, prev)
        self.fc2 = nn.Linear(prev, 1)

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(self.stem(x), LRELU_SLOPE)
        for block in self.blocks:
            h = block(h)
        h = F.leaky_relu(self.final_conv(h), LRELU_SLOPE)
        h = F.leaky_relu(self.fc1(h.flatten(1)), LRELU_SLOPE)
        return self.fc2(h).squeeze(1)


class PatchDiscriminator(nn.Module):
    """Image -> grid of patch scores."""

    def __init__(self, input_size: int, patches: int, stem_width: int, cap: int):
        super().__init__()
        blocks = int(math.log2(input_size // patches))
        widths = _widths(stem_width, blocks, cap)
        self.stem = nn.Conv2d(3, stem_width, 3, padding=1)
        prev = stem_width
        mods = []
        for w in widths:
            mods.append(ResBlockDown(prev, w))
            prev = w
        self.blocks = nn.ModuleList(mods)
        self.head = nn.Conv2d(prev, 1, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(self.stem(x), LRELU_SLOPE)
        for block in self.blocks:
            h = block(h)
        return self.head(h).squeeze(1)


class MultiScaleDiscriminator(nn.Module):
    """The (global, full-res patch, half-res patch) critic trio."""

    def __init__(
        self,
        image_size: int,
        d2_patches: int,
        d3_patches: int,
        stem_width: int = 16,
        cap: int = 64,
    ):
        super().__init__()
        self.image_size = image_size
        self.d1 = GlobalDiscriminator(image_size, stem_width, cap)
        self.d2 = PatchDiscriminator(image_size, d2_patches, stem_width, cap)
        self.d3 = PatchDiscriminator(image_size // 2, d3_patches, stem_width, cap)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            raise ValueError(
                f"expected {self.image_size}px input, got {tuple(x.shape[-2:])}"
            )
        return self.d1(x), self.d2(x), self.d3(F.avg_pool2d(x, 2))

    def score_halved(self, x_half: Tensor) -> Tensor:
        """Feed an externally 2x-downsampled image straight to the third critic."""
        return self.d3(x_half)
