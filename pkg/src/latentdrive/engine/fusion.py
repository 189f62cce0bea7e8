"""Content fusion: the action-independent sample restyles the action-dependent
grid through two AdaIN + Conv blocks."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from latentdrive.core import adain
from latentdrive.engine.config import EngineConfig

LRELU_SLOPE = 0.2


class FusionMLP(nn.Module):
    """Two linear layers mapping the style source to (alpha, beta) for one block."""

    def __init__(self, in_dim: int, channels: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, in_dim)
        self.fc2 = nn.Linear(in_dim, 2 * channels)
        self.channels = channels

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = F.leaky_relu(self.fc1(x), LRELU_SLOPE)
        out = self.fc2(h)
        return out[:, : self.channels], out[:, self.channels :]


class ContentFusion(nn.Module):
    """z_content' = C2(A2(C1(A1(z_adep)))) with per-block (alpha, beta) MLPs.

    The convs between the AdaINs are linear (no activation): the output is the
    next content latent and must stay in the same unconstrained space the
    encoder produces.
    """

    def __init__(self, config: EngineConfig):
        super().__init__()
        self.config = config
        hidden = config.fusion_hidden
        self.mlp1 = FusionMLP(config.aindep_dim, config.content_dim)
        self.mlp2 = FusionMLP(config.aindep_dim, hidden)
        self.conv1 = nn.Conv2d(config.content_dim, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, config.content_dim, 3, padding=1)

    def forward(self, z_adep: Tensor, z_aindep: Tensor) -> Tensor:
        cfg = self.config
        n = cfg.grid_size
        if z_adep.shape[1:] != (cfg.content_dim, n, n):
            raise ValueError(
                f"z_adep must be (B, {cfg.content_dim}, {n}, {n}), got {tuple(z_adep.shape)}"
            )
        if z_aindep.shape[1:] != (cfg.aindep_dim,):
            raise ValueError(
                f"z_aindep must be (B, {cfg.aindep_dim}), got {tuple(z_aindep.shape)}"
            )
        a1, b1 = self.mlp1(z_aindep)
        a2, b2 = self.mlp2(z_aindep)
        x = adain(z_adep, a1, b1)
        x = self.conv1(x)
        x = adain(x, a2, b2)
        return self.conv2(x)
