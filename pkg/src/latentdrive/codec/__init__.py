from latentdrive.core import adain, reparameterize  # codec's normalization/sampling ops
from latentdrive.codec.config import CodecConfig
from latentdrive.codec.decoder import ImageDecoder
from latentdrive.codec.discriminator import MultiScaleDiscriminator
from latentdrive.codec.encoder import ImageEncoder
from latentdrive.codec.losses import (
    PretrainLosses,
    discriminator_adversarial,
    generator_adversarial,
    pretrain_loss,
)
from latentdrive.codec.model import Codec
from latentdrive.codec.perceptual import PerceptualMetric

__all__ = [
    "Codec",
    "CodecConfig",
    "ImageDecoder",
    "ImageEncoder",
    "MultiScaleDiscriminator",
    "PerceptualMetric",
    "PretrainLosses",
    "adain",
    "discriminator_adversarial",
    "generator_adversarial",
    "pretrain_loss",
    "reparameterize",
]
