"""Codec facade: encode, decode, prior sampling, content-cell edits."""

from __future__ import annotations

import torch
from torch import Tensor, nn

from latentdrive.core import GaussianParams, LatentCode, reparameterize
from latentdrive.codec.config import CodecConfig
from latentdrive.codec.decoder import ImageDecoder
from latentdrive.codec.encoder import ImageEncoder


class Codec(nn.Module):
    def __init__(self, config: CodecConfig):
        super().__init__()
        self.config = config
        self.encoder = ImageEncoder(
            image_size=config.image_size,
            theme_dim=config.theme_dim,
            grid_size=config.grid_size,
            content_dim=config.content_dim,
            stem_width=config.stem_width,
            enc_widths=config.enc_widths,
            content_widths=config.content_widths,
        )
        self.decoder = ImageDecoder(
            image_size=config.image_size,
            theme_dim=config.theme_dim,
            grid_size=config.grid_size,
            content_dim=config.content_dim,
            dec_widths=config.dec_widths,
            const_width=config.const_width,
            style_width=config.style_width,
        )

    def encode(self, images: Tensor) -> tuple[GaussianParams, GaussianParams]:
        return self.encoder(images)

    def encode_mean(self, images: Tensor) -> LatentCode:
        """Posterior-mean latent (the epsilon = 0 encoding)."""
        theme, content = self.encoder(images)
        return LatentCode(theme=theme.mu, content=content.mu)

    def encode_sample(
        self, images: Tensor, generator: torch.Generator | None = None
    ) -> tuple[LatentCode, GaussianParams, GaussianParams]:
        theme, content = self.encoder(images)
        z = LatentCode(
            theme=reparameterize(theme, generator=generator),
            content=reparameterize(content, generator=generator),
        )
        return z, theme, content

    def decode(self, z: LatentCode) -> Tensor:
        return self.decoder(z)

    def sample_prior(
        self,
        batch: int = 1,
        generator: torch.Generator | None = None,
        device=None,
    ) -> LatentCode:
        cfg = self.config
        theme = torch.randn(batch, cfg.theme_dim, generator=generator, device=device)
        content = torch.randn(
            batch, cfg.content_dim, cfg.grid_size, cfg.grid_size,
            generator=generator, device=device,
        )
        return LatentCode(theme=theme, content=content)

    def sample_theme(
        self, z: LatentCode, generator: torch.Generator | None = None
    ) -> LatentCode:
        theme = torch.randn(
            z.batch_size, z.theme_dim, generator=generator,
            dtype=z.theme.dtype, device=z.theme.device,
        )
        return LatentCode(theme=theme, content=z.content.clone())

    def sample_content_cell(
        self,
        z: LatentCode,
        cell: tuple[int, int],
        generator: torch.Generator | None = None,
    ) -> LatentCode:
        """Swap one grid cell's content for a fresh prior draw."""
        i, j = cell
        n = z.grid_size
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"cell {cell} out of range for {n}x{n} grid")
        content = z.content.clone()
        content[:, :, i, j] = torch.randn(
            z.batch_size, z.content_dim, generator=generator,
            dtype=content.dtype, device=content.device,
        )
        return LatentCode(theme=z.theme.clone(), content=content)
