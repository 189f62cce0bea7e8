"""The two recurrent branches of the dynamics engine.

The convolutional branch sees the action; the linear branch never does, which
is what splits content evolution into action-dependent and action-independent
parts.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from latentdrive.core import GaussianParams, LatentCode
from latentdrive.engine.config import EngineConfig

LRELU_SLOPE = 0.2


class ConvBranch(nn.Module):
    """Action-conditioned convLSTM over the content grid."""

    def __init__(self, config: EngineConfig):
        super().__init__()
        self.config = config
        in_ch = (
            config.conv_channels
            + config.action_dim
            + config.theme_dim
            + config.content_dim
        )
        self.fuse = nn.Conv2d(in_ch, config.fused_channels, 1)
        self.gate_conv1 = nn.Conv2d(config.fused_channels, 4 * config.conv_channels, 3, padding=1)
        self.gate_conv2 = nn.Conv2d(4 * config.conv_channels, 4 * config.conv_channels, 3, padding=1)

    def fused_input(self, h_conv: Tensor, z: LatentCode, action: Tensor) -> Tensor:
        """Spatially replicate action and theme, concat everything, 1x1-fuse."""
        n = self.config.grid_size
        b = z.batch_size
        if action.shape != (b, self.config.action_dim):
            raise ValueError(
                f"action must be ({b}, {self.config.action_dim}), got {tuple(action.shape)}"
            )
        action_map = action.reshape(b, -1, 1, 1).expand(-1, -1, n, n)
        theme_map = z.theme.reshape(b, -1, 1, 1).expand(-1, -1, n, n)
        stacked = torch.cat([h_conv, action_map, theme_map, z.content], dim=1)
        return F.leaky_relu(self.fuse(stacked), LRELU_SLOPE)

    def gate_preactivations(self, fused: Tensor) -> Tensor:
        """Two 3x3 convs producing the channel-stacked gate tensor."""
        h = F.leaky_relu(self.gate_conv1(fused), LRELU_SLOPE)
        return self.gate_conv2(h)

    def forward(
        self, h_conv: Tensor, c_conv: Tensor, z: LatentCode, action: Tensor
    ) -> tuple[Tensor, Tensor]:
        v = self.gate_preactivations(self.fused_input(h_conv, z, action))
        v_i, v_f, v_o, v_g = v.chunk(4, dim=1)
        i = torch.sigmoid(v_i)
        f = torch.sigmoid(v_f)
        o = torch.sigmoid(v_o)
        c_next = f * c_conv + i * torch.tanh(v_g)
        h_next = o * torch.tanh(c_next)
        return h_next, c_next


class ActionBranchHeads(nn.Module):
    """Gaussian heads off the convLSTM hidden state."""

    def __init__(self, config: EngineConfig):
        super().__init__()
        self.config = config
        self.adep_head = nn.Conv2d(config.conv_channels, 2 * config.content_dim, 1)
        self.theme_head = nn.Conv2d(
            config.conv_channels, 2 * config.theme_dim, config.grid_size, padding=0
        )
        with torch.no_grad():
            self.adep_head.bias[config.content_dim :].fill_(-2.0)
            self.theme_head.bias[config.theme_dim :].fill_(-2.0)

    def forward(self, h_conv: Tensor) -> tuple[GaussianParams, GaussianParams]:
        n = self.config.grid_size
        if h_conv.dim() != 4 or h_conv.shape[1:] != (self.config.conv_channels, n, n):
            raise ValueError(
                f"h_conv must be (B, {self.config.conv_channels}, {n}, {n}), "
                f"got {tuple(h_conv.shape)}"
            )
        adep_out = self.adep_head(h_conv)
        a_mu, a_raw = adep_out.chunk(2, dim=1)
        theme_out = self.theme_head(h_conv).reshape(h_conv.shape[0], -1)
        t_mu, t_raw = theme_out.chunk(2, dim=1)
        return (
            GaussianParams(mu=a_mu, raw_scale=a_raw),
            GaussianParams(mu=t_mu, raw_scale=t_raw),
        )


class IndepBranch(nn.Module):
    """Plain LSTM over the flattened latent; structurally blind to actions."""

    def __init__(self, config: EngineConfig):
        super().__init__()
        self.config = config
        dims = [config.latent_flat_dim] + [config.linear_dim] * 5
        self.encoder = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(5)
        )
        self.w_ih = nn.Linear(config.linear_dim, 4 * config.linear_dim)
        self.w_hh = nn.Linear(config.linear_dim, 4 * config.linear_dim)
        self.head = nn.Linear(config.linear_dim, 2 * config.aindep_dim)
        with torch.no_grad():
            self.head.bias[config.aindep_dim :].fill_(-2.0)

    def encode(self, z: LatentCode) -> Tensor:
        x = z.flatten()
        for layer in self.encoder:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
        return x

    def cell(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        v = self.w_ih(x) + self.w_hh(h)
        v_i, v_f, v_o, v_g = v.chunk(4, dim=1)
        i = torch.sigmoid(v_i)
        f = torch.sigmoid(v_f)
        o = torch.sigmoid(v_o)
        c_next = f * c + i * torch.tanh(v_g)
        h_next = o * torch.tanh(c_next)
        return h_next, c_next

    def forward(
        self, h_lin: Tensor, c_lin: Tensor, z: LatentCode
    ) -> tuple[Tensor, Tensor, GaussianParams]:
        h_next, c_next = self.cell(self.encode(z), h_lin, c_lin)
        mu, raw = self.head(h_next).chunk(2, dim=1)
        return h_next, c_next, GaussianParams(mu=mu, raw_scale=raw)
