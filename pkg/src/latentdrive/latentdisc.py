"""Latent-space discriminators for dynamics training.

A per-frame critic over flattened latents, and a temporal critic that fuses
adjacent-frame features with action embeddings and convolves over time. The
temporal critic doubles as the action-reconstruction pathway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn
from torch.nn.utils.parametrizations import spectral_norm

LRELU_SLOPE = 0.2


@dataclass(frozen=True)
class LatentDiscConfig:
    latent_dim: int = 288
    action_dim: int = 2
    feat_dim: int = 192
    temporal_channels: tuple[int, ...] = (64, 96, 128)
    temporal_strides: tuple[int, ...] = (1, 1, 1)
    kernel: int = 3
    head_kernel: int = 3

    def __post_init__(self) -> None:
        if len(self.temporal_channels) != len(self.temporal_strides):
            raise ValueError("channels and strides must align")

    @classmethod
    def desk(cls, latent_dim: int = 288, **overrides) -> "LatentDiscConfig":
        return cls(latent_dim=latent_dim, **overrides)

    @classmethod
    def paper(cls, **overrides) -> "LatentDiscConfig":
        defaults = dict(
            latent_dim=1152,
            feat_dim=1024,
            temporal_channels=(128, 256, 512),
            temporal_strides=(2, 1, 2),
        )
        defaults.update(overrides)
        return cls(**defaults)


def temporal_lengths(config: LatentDiscConfig, timesteps: int) -> list[int]:
    """Sequence lengths after each strided conv, starting from T-1 pairs."""
    length = timesteps - 1
    lengths = []
    for stride in config.temporal_strides:
        length = (length - config.kernel) // stride + 1
        lengths.append(length)
    return lengths


def min_timesteps(config: LatentDiscConfig) -> int:
    """Smallest T for which every temporal patch head emits at least one score."""
    for t in range(4, 4096):
        lengths = temporal_lengths(config, t)
        if all(l - config.head_kernel + 1 >= 1 for l in lengths) and min(lengths) >= 1:
            return t
    raise ValueError("temporal stack never fits")


class SingleLatentDiscriminator(nn.Module):
    """6-layer spectrally normalized MLP; exposes the 4th-layer feature."""

    def __init__(self, config: LatentDiscConfig):
        super().__init__()
        self.config = config
        dims = [config.latent_dim] + [config.feat_dim] * 5
        self.layers = nn.ModuleList(
            spectral_norm(nn.Linear(dims[i], dims[i + 1])) for i in range(5)
        )
        self.norms = nn.ModuleList(nn.BatchNorm1d(config.feat_dim) for _ in range(5))
        self.final = spectral_norm(nn.Linear(config.feat_dim, 1))

    def forward(self, z_flat: Tensor) -> tuple[Tensor, Tensor]:
        if z_flat.dim() != 2 or z_flat.shape[1] != self.config.latent_dim:
            raise ValueError(
                f"expected (B, {self.config.latent_dim}), got {tuple(z_flat.shape)}"
            )
        h = z_flat
        feat4 = None
        for i, (layer, norm) in enumerate(zip(self.layers, self.norms)):
            h = F.leaky_relu(norm(layer(h)), LRELU_SLOPE)
            if i == 3:
                feat4 = h
        score = self.final(h).squeeze(1)
        return score, feat4


class TemporalLatentDiscriminator(nn.Module):
    """Action-conditioned temporal critic over latent pair features."""

    def __init__(self, config: LatentDiscConfig):
        super().__init__()
        self.config = config
        self.pair_linear = spectral_norm(nn.Linear(2 * config.feat_dim, config.feat_dim))
        self.action_linear = spectral_norm(nn.Linear(config.action_dim, config.feat_dim))
        convs, heads = [], []
        prev = 2 * config.feat_dim
        for ch, stride in zip(config.temporal_channels, config.temporal_strides):
            convs.append(spectral_norm(nn.Conv1d(prev, ch, config.kernel, stride=stride)))
            heads.append(nn.Conv1d(ch, 1, config.head_kernel))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.heads = nn.ModuleList(heads)

    def pair_features(self, feat4_seq: Tensor) -> Tensor:
        """(B, T, F) single-frame features -> (B, T-1, F) adjacent-pair features."""
        pairs = torch.cat([feat4_seq[:, 1:], feat4_seq[:, :-1]], dim=2)
        return F.leaky_relu(self.pair_linear(pairs), LRELU_SLOPE)

    def forward(
        self, pair_feats: Tensor, actions: Tensor
    ) -> tuple[Tensor, Tensor, Tensor]:
        b, steps, _ = pair_feats.shape
        if actions.shape[:2] != (b, steps):
            raise ValueError(
                f"actions must be ({b}, {steps}, A), got {tuple(actions.shape)}"
            )
        needed = min_timesteps(self.config)
        if steps + 1 < needed:
            raise ValueError(
                f"temporal stack needs at least T={needed} timesteps, got {steps + 1}"
            )
        emb = F.leaky_relu(self.action_linear(actions), LRELU_SLOPE)
        h = torch.cat([pair_feats, emb], dim=2).transpose(1, 2)  # (B, 2F, T-1)
        scores = []
        for conv, head in zip(self.convs, self.heads):
            h = F.leaky_relu(conv(h), LRELU_SLOPE)
            scores.append(head(h).squeeze(1))
        return tuple(scores)


class ActionReconstructor(nn.Module):
    """Linear readout of the transition action from a pair feature."""

    def __init__(self, config: LatentDiscConfig):
        super().__init__()
        self.linear = nn.Linear(config.feat_dim, config.action_dim)

    def forward(self, pair_feats: Tensor) -> Tensor:
        return self.linear(pair_feats)

    def loss(self, pair_feats: Tensor, actions: Tensor) -> Tensor:
        return F.mse_loss(self.forward(pair_feats), actions)


class LatentDiscriminators(nn.Module):
    """Bundle: single critic, temporal critic, action readout."""

    def __init__(self, config: LatentDiscConfig):
        super().__init__()
        self.config = config
        self.single = SingleLatentDiscriminator(config)
        self.temporal = TemporalLatentDiscriminator(config)
        self.action_head = ActionReconstructor(config)

    def d_single(self, z_flat: Tensor) -> tuple[Tensor, Tensor]:
        return self.single(z_flat)

    def d_temporal(
        self, latents: Tensor, actions: Tensor
    ) -> tuple[tuple[Tensor, ...], Tensor]:
        """latents: (B, T, latent_dim); actions: (B, T-1, action_dim)."""
        if latents.dim() != 3:
            raise ValueError(f"latents must be (B, T, D), got {tuple(latents.shape)}")
        b, t, d = latents.shape
        if t < 4:
            raise ValueError(f"need T >= 4, got {t}")
        _, feat4 = self.single(latents.reshape(b * t, d))
        feat4 = feat4.reshape(b, t, -1)
        pair_feats = self.temporal.pair_features(feat4)
        scores = self.temporal(pair_feats, actions)
        return scores, pair_feats


def sample_negative_actions(
    actions_source, shape: tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    """Uniformly sampled action rows from the dataset, any alignment."""
    if hasattr(actions_source, "all_actions"):
        pool = np.asarray(actions_source.all_actions(), dtype=np.float32)
    else:
        pool = np.asarray(actions_source, dtype=np.float32)
    pool = pool.reshape(-1, pool.shape[-1])
    if pool.shape[0] == 0:
        raise ValueError("empty action dataset")
    if shape[-1] != pool.shape[-1]:
        raise ValueError(f"requested action dim {shape[-1]} != stored {pool.shape[-1]}")
    count = int(np.prod(shape[:-1]))
    idx = rng.integers(0, pool.shape[0], size=count)
    return pool[idx].reshape(shape)
