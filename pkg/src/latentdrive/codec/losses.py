"""Pretraining loss assembly: perceptual reconstruction + KL + image GAN.

The image GAN uses the non-saturating logistic loss; patch discriminators
contribute the mean of per-patch losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

from latentdrive.core import GaussianParams, check_finite, kl_standard_normal, reparameterize, LatentCode
from latentdrive.codec.discriminator import MultiScaleDiscriminator
from latentdrive.codec.model import Codec
from latentdrive.codec.perceptual import PerceptualMetric


@dataclass
class PretrainLosses:
    recon: Tensor
    kl_theme: Tensor
    kl_content: Tensor
    g_adv: Tensor
    d_adv: Tensor

    @property
    def generator_total(self) -> Tensor:
        return self.recon + self.kl_theme + self.kl_content + self.g_adv

    def as_dict(self) -> dict[str, float]:
        return {
            "recon": float(self.recon.detach()),
            "kl_theme": float(self.kl_theme.detach()),
            "kl_content": float(self.kl_content.detach()),
            "g_adv": float(self.g_adv.detach()),
            "d_adv": float(self.d_adv.detach()),
        }


def generator_adversarial(fake_scores: tuple[Tensor, ...]) -> Tensor:
    """Non-saturating logistic G loss, per-patch losses averaged, critics summed."""
    return sum(F.softplus(-s).mean() for s in fake_scores)


def discriminator_adversarial(
    real_scores: tuple[Tensor, ...], fake_scores: tuple[Tensor, ...]
) -> Tensor:
    total = sum(F.softplus(-r).mean() for r in real_scores)
    total = total + sum(F.softplus(f).mean() for f in fake_scores)
    return total


def kl_terms(
    theme: GaussianParams, content: GaussianParams, beta_theme: float, beta_content: float
) -> tuple[Tensor, Tensor]:
    return (
        beta_theme * kl_standard_normal(theme).mean(),
        beta_content * kl_standard_normal(content).mean(),
    )


def pretrain_loss(
    images: Tensor,
    codec: Codec,
    discriminator: MultiScaleDiscriminator,
    perceptual: PerceptualMetric,
    generator: torch.Generator | None = None,
) -> PretrainLosses:
    """All loss components for one batch; raises TrainingFault on NaN."""
    if images.shape[0] == 0:
        raise ValueError("empty batch")
    cfg = codec.config
    z, theme, content = codec.encode_sample(images, generator=generator)
    recon_images = codec.decode(z)

    recon = cfg.perceptual_weight * perceptual.distance(images, recon_images)
    kl_theme, kl_content = kl_terms(theme, content, cfg.beta_theme, cfg.beta_content)
    g_adv = generator_adversarial(discriminator(recon_images))
    d_adv = discriminator_adversarial(
        discriminator(images), discriminator(recon_images.detach())
    )

    losses = PretrainLosses(recon, kl_theme, kl_content, g_adv, d_adv)
    for name, value in losses.as_dict().items():
        check_finite(name, getattr(losses, name))
    return losses
