"""Dynamics engine configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EngineConfig:
    grid_size: int = 4
    content_dim: int = 16
    theme_dim: int = 32
    conv_channels: int = 32
    linear_dim: int = 160
    aindep_dim: int = 128
    fused_channels: int = 24
    action_dim: int = 2
    fusion_mult: int = 4  # intermediate fusion conv channels = mult * content_dim

    def __post_init__(self) -> None:
        for name in (
            "grid_size", "content_dim", "theme_dim", "conv_channels",
            "linear_dim", "aindep_dim", "fused_channels", "action_dim", "fusion_mult",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def latent_flat_dim(self) -> int:
        return self.theme_dim + self.grid_size**2 * self.content_dim

    @property
    def fusion_hidden(self) -> int:
        return self.fusion_mult * self.content_dim

    @classmethod
    def desk(cls, **overrides) -> "EngineConfig":
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides) -> "EngineConfig":
        defaults = dict(
            grid_size=4,
            content_dim=64,
            theme_dim=128,
            conv_channels=128,
            linear_dim=1024,
            aindep_dim=1024,
            fused_channels=48,
            action_dim=2,
            fusion_mult=4,
        )
        defaults.update(overrides)
        return cls(**defaults)

    def matches_codec(self, theme_dim: int, grid_size: int, content_dim: int) -> bool:
        return (
            self.theme_dim == theme_dim
            and self.grid_size == grid_size
            and self.content_dim == content_dim
        )
