"""latentdrive: a trainable, interactively drivable latent-space neural simulator."""

from latentdrive.core import GaussianParams, LatentCode, adain, kl_standard_normal, reparameterize

__all__ = [
    "GaussianParams",
    "LatentCode",
    "adain",
    "kl_standard_normal",
    "reparameterize",
]

__version__ = "0.1.0"
