"""Theme/content image encoder.

A shared convolutional trunk feeds two heads: a spatial content head that
keeps an NxN grid, and a theme head that global-pools into a single vector.
Both heads emit (mu, raw_scale) chunks for reparameterization.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from latentdrive.core import GaussianParams
from latentdrive.codec.layers import LRELU_SLOPE, ResBlockDown, split_gaussian_channels


class ImageEncoder(nn.Module):
    def __init__(
        self,
        image_size: int,
        theme_dim: int,
        grid_size: int,
        content_dim: int,
        stem_width: int,
        enc_widths: tuple[int, ...],
        content_widths: tuple[int, ...],
    ):
        super().__init__()
        self.image_size = image_size
        self.theme_dim = theme_dim
        self.grid_size = grid_size
        self.content_dim = content_dim

        self.stem = nn.Conv2d(3, stem_width, 3, padding=1)
        blocks = []
        prev = stem_width
        for w in enc_widths:
            blocks.append(ResBlockDown(prev, w))
            prev = w
        self.feat = nn.ModuleList(blocks)
        feat_width = prev

        content = []
        for w in content_widths:
            content.append(ResBlockDown(prev, w))
            prev = w
        self.content_blocks = nn.ModuleList(content)
        self.content_conv1 = nn.Conv2d(prev, prev, 3, padding=1)
        self.content_out = nn.Conv2d(prev, 2 * content_dim, 3, padding=1)

        self.theme_conv = nn.Conv2d(feat_width, feat_width, 3, padding=1)
        self.theme_out = nn.Linear(feat_width, 2 * theme_dim)

        # start with small posterior scales and a boosted mu gain so samples
        # track mu and separate images from step one; with sigma ~ 0.7 and
        # near-zero mu the latents are noise-dominated and the decoder learns
        # to ignore them before mu can spread
        with torch.no_grad():
            self.content_out.bias[content_dim:].fill_(-2.0)
            self.theme_out.bias[theme_dim:].fill_(-2.0)
            self.content_out.weight[:content_dim] *= 2.0
            self.theme_out.weight[:theme_dim] *= 2.0

    def forward(self, images: Tensor) -> tuple[GaussianParams, GaussianParams]:
        if images.dim() != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W), got {tuple(images.shape)}")
        if images.shape[2] != self.image_size or images.shape[3] != self.image_size:
            raise ValueError(
                f"expected {self.image_size}px input, got "
                f"{images.shape[2]}x{images.shape[3]}"
            )
        h = F.leaky_relu(self.stem(images), LRELU_SLOPE)
        for block in self.feat:
            h = block(h)

        c = h
        for block in self.content_blocks:
            c = block(c)
        c = F.leaky_relu(self.content_conv1(c), LRELU_SLOPE)
        c_mu, c_raw = split_gaussian_channels(self.content_out(c))

        t = F.leaky_relu(self.theme_conv(h), LRELU_SLOPE)
        t = t.mean(dim=(2, 3))
        t_mu, t_raw = self.theme_out(t).chunk(2, dim=1)

        theme = GaussianParams(mu=t_mu, raw_scale=t_raw)
        content = GaussianParams(mu=c_mu, raw_scale=c_raw)
        return theme, content
