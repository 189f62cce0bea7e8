"""Codec configuration and the two reference profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CodecConfig:
    image_size: int = 64
    theme_dim: int = 32
    grid_size: int = 4
    content_dim: int = 16
    stem_width: int = 12
    enc_widths: tuple[int, ...] = (16, 32, 48)
    content_widths: tuple[int, ...] = (48,)
    dec_widths: tuple[int, ...] = (48, 48, 32, 24, 16)
    const_width: int = 16
    style_width: int = 64
    d2_patches: int = 8
    d3_patches: int = 4
    disc_stem: int = 8
    disc_cap: int = 32
    beta_theme: float = 1.0
    beta_content: float = 2.0
    perceptual_weight: float = 25.0
    r1_weight: float = 10.0

    def __post_init__(self) -> None:
        size = self.image_size
        if size < 64 or (size & (size - 1)) != 0:
            raise ValueError(f"image_size must be a power of two >= 64, got {size}")
        if self.beta_theme <= 0 or self.beta_content <= 0:
            raise ValueError("beta values must be > 0")
        if len(self.enc_widths) != 3:
            raise ValueError("feature extractor uses exactly 3 downsampling blocks")
        feat_out = size // 8
        need = int(math.log2(feat_out // self.grid_size))
        if len(self.content_widths) != need:
            raise ValueError(
                f"content head needs {need} downsampling blocks for "
                f"{feat_out}->{self.grid_size}"
            )
        stages = int(math.log2(size // self.grid_size)) + 1
        if len(self.dec_widths) != stages:
            raise ValueError(f"decoder needs {stages} stage widths for {size}px output")

    @property
    def latent_flat_dim(self) -> int:
        return self.theme_dim + self.grid_size**2 * self.content_dim

    @classmethod
    def desk(cls, **overrides) -> "CodecConfig":
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides) -> "CodecConfig":
        defaults = dict(
            image_size=256,
            theme_dim=128,
            grid_size=4,
            content_dim=64,
            stem_width=128,
            enc_widths=(256, 512, 512),
            content_widths=(512, 512, 512),
            dec_widths=(512, 512, 512, 512, 256, 128, 64),
            const_width=512,
            style_width=1024,
            d2_patches=16,
            d3_patches=8,
            disc_stem=128,
            disc_cap=512,
        )
        defaults.update(overrides)
        return cls(**defaults)
