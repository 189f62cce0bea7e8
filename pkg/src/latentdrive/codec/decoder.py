"""Image generator: content grid in, theme injected through AdaIN everywhere.

The content grid enters at the stem (concatenated with a learned constant
tensor) and carries all spatial information; the theme vector only ever
reaches the image through per-conv AdaIN scale/bias, so swapping themes can
never move content.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from latentdrive.core import LatentCode, adain
from latentdrive.codec.layers import LRELU_SLOPE, StyleAffine


class StyledConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, style_dim: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.affine = StyleAffine(style_dim, out_ch)

    def forward(self, x: Tensor, style: Tensor) -> Tensor:
        alpha, gamma = self.affine(style)
        return F.leaky_relu(adain(self.conv(x), alpha, gamma), LRELU_SLOPE)


class ImageDecoder(nn.Module):
    def __init__(
        self,
        image_size: int,
        theme_dim: int,
        grid_size: int,
        content_dim: int,
        dec_widths: tuple[int, ...],
        const_width: int,
        style_width: int,
        mlp_layers: int = 8,
    ):
        super().__init__()
        self.image_size = image_size
        self.theme_dim = theme_dim
        self.grid_size = grid_size
        self.content_dim = content_dim

        mlp = []
        prev = theme_dim
        for _ in range(mlp_layers):
            mlp.append(nn.Linear(prev, style_width))
            prev = style_width
        self.style_mlp = nn.ModuleList(mlp)

        self.const = nn.Parameter(torch.randn(1, const_width, grid_size, grid_size))
        # plain conv: the content grid must reach the styled stages unnormalized,
        # or AdaIN at the entry point erases its per-channel statistics
        self.content_stem = nn.Conv2d(content_dim, dec_widths[0], 3, padding=1)

        convs = []
        prev = dec_widths[0] + const_width
        for w in dec_widths:
            convs.append(StyledConv(prev, w, style_width))
            convs.append(StyledConv(w, w, style_width))
            prev = w
        self.stages = nn.ModuleList(convs)
        self.to_rgb = nn.Conv2d(dec_widths[-1], 3, 1)

    def style(self, theme: Tensor) -> Tensor:
        s = theme
        for layer in self.style_mlp:
            s = F.leaky_relu(layer(s), LRELU_SLOPE)
        return s

    def forward(self, z: LatentCode) -> Tensor:
        if z.theme_dim != self.theme_dim or z.content_dim != self.content_dim:
            raise ValueError(
                f"latent dims ({z.theme_dim}, {z.content_dim}) do not match decoder "
                f"({self.theme_dim}, {self.content_dim})"
            )
        if z.grid_size != self.grid_size:
            raise ValueError(f"latent grid {z.grid_size} != {self.grid_size}")
        style = self.style(z.theme)
        content = F.leaky_relu(self.content_stem(z.content), LRELU_SLOPE)
        x = torch.cat([self.const.expand(z.batch_size, -1, -1, -1), content], dim=1)
        for i in range(0, len(self.stages), 2):
            if i > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = self.stages[i](x, style)
            x = self.stages[i + 1](x, style)
        return torch.tanh(self.to_rgb(x))
