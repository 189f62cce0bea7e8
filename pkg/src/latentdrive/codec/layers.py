"""Building blocks shared by the codec networks."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

LRELU_SLOPE = 0.2


class ConvLReLU(nn.Module):
    """3x3 same-padding conv followed by leaky ReLU."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return F.leaky_relu(self.conv(x), LRELU_SLOPE)


class ResBlockDown(nn.Module):
    """Residual block with 2x downsampling: two 3x3 convs + 1x1 skip."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1)

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(self.conv1(x), LRELU_SLOPE)
        h = F.leaky_relu(self.conv2(h), LRELU_SLOPE)
        h = F.avg_pool2d(h, 2)
        s = F.avg_pool2d(F.leaky_relu(self.skip(x), LRELU_SLOPE), 2)
        return (h + s) / math.sqrt(2.0)


class StyleAffine(nn.Module):
    """Per-AdaIN affine map from the style vector to (scale, bias).

    Scale is predicted as an offset around 1 so a zeroed layer is an identity
    renormalization.
    """

    def __init__(self, style_dim: int, channels: int):
        super().__init__()
        self.linear = nn.Linear(style_dim, 2 * channels)
        self.channels = channels
        nn.init.zeros_(self.linear.bias)

    def forward(self, style: Tensor) -> tuple[Tensor, Tensor]:
        out = self.linear(style)
        alpha, gamma = out.chunk(2, dim=1)
        return 1.0 + alpha, gamma


def split_gaussian_channels(out: Tensor) -> tuple[Tensor, Tensor]:
    """Split a head output into (mu, raw_scale) halves along channels."""
    return out.chunk(2, dim=1)
