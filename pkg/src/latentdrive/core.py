"""Shared latent-space primitives: Gaussian heads, reparameterization, AdaIN.

Every stochastic site in the codec and the dynamics engine goes through the
same (mu, raw_scale) parameterization, with sigma = softplus(raw_scale) + 1e-6
so scales stay strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

SIGMA_FLOOR = 1e-6
ADAIN_EPS = 1e-5


class TrainingFault(RuntimeError):
    """Non-finite value in a named loss component or gradient."""

    def __init__(self, component: str, message: str = ""):
        self.component = component
        super().__init__(f"non-finite value in {component!r}" + (f": {message}" if message else ""))


def check_finite(component: str, value: Tensor) -> Tensor:
    if not torch.isfinite(value).all():
        raise TrainingFault(component)
    return value


@dataclass
class GaussianParams:
    """mu / raw_scale pair backing a reparameterized sample."""

    mu: Tensor
    raw_scale: Tensor

    def __post_init__(self) -> None:
        if self.mu.shape != self.raw_scale.shape:
            raise ValueError(
                f"mu shape {tuple(self.mu.shape)} != raw_scale shape "
                f"{tuple(self.raw_scale.shape)}"
            )

    @property
    def sigma(self) -> Tensor:
        return F.softplus(self.raw_scale) + SIGMA_FLOOR

    @property
    def shape(self) -> torch.Size:
        return self.mu.shape


def reparameterize(
    params: GaussianParams,
    epsilon: Tensor | None = None,
    generator: torch.Generator | None = None,
) -> Tensor:
    """Sample mu + eps * sigma; eps drawn i.i.d. standard normal if not given."""
    if epsilon is None:
        epsilon = torch.randn(
            params.mu.shape,
            generator=generator,
            dtype=params.mu.dtype,
            device=params.mu.device,
        )
    elif epsilon.shape != params.mu.shape:
        raise ValueError(
            f"epsilon shape {tuple(epsilon.shape)} != parameter shape "
            f"{tuple(params.mu.shape)}"
        )
    return params.mu + epsilon * params.sigma


def kl_standard_normal(params: GaussianParams) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over non-batch dims.

    Returns a per-sample vector: the leading dim is treated as batch.
    """
    sigma = params.sigma
    per_dim = 0.5 * (params.mu**2 + sigma**2 - 1.0 - 2.0 * torch.log(sigma))
    return per_dim.reshape(per_dim.shape[0], -1).sum(dim=1)


def adain(feature_map: Tensor, alpha: Tensor, gamma: Tensor) -> Tensor:
    """Adaptive instance normalization over spatial dims of a (B, C, H, W) map.

    Each channel is renormalized to scale alpha_c and bias gamma_c; alpha and
    gamma are (C,) or (B, C). Constant maps degrade gracefully through the
    std floor.
    """
    if feature_map.dim() != 4:
        raise ValueError(f"expected (B, C, H, W), got {tuple(feature_map.shape)}")
    b, c, _, _ = feature_map.shape
    if alpha.shape[-1] != c or gamma.shape[-1] != c:
        raise ValueError(f"alpha/gamma channel dim must be {c}")
    mean = feature_map.mean(dim=(2, 3), keepdim=True)
    std = feature_map.std(dim=(2, 3), keepdim=True, unbiased=False)
    normalized = (feature_map - mean) / (std + ADAIN_EPS)
    alpha = alpha.reshape(-1, c, 1, 1)
    gamma = gamma.reshape(-1, c, 1, 1)
    return alpha * normalized + gamma


@dataclass
class LatentCode:
    """Disentangled image latent: a global theme vector and an NxN content grid.

    theme is (B, D_theme); content is (B, D_content, N, N) channel-first.
    """

    theme: Tensor
    content: Tensor

    def __post_init__(self) -> None:
        if self.theme.dim() != 2:
            raise ValueError(f"theme must be (B, D), got {tuple(self.theme.shape)}")
        if self.content.dim() != 4:
            raise ValueError(
                f"content must be (B, C, N, N), got {tuple(self.content.shape)}"
            )
        if self.theme.shape[0] != self.content.shape[0]:
            raise ValueError("theme/content batch dims differ")
        if self.content.shape[2] != self.content.shape[3]:
            raise ValueError("content grid must be square")

    @property
    def batch_size(self) -> int:
        return self.theme.shape[0]

    @property
    def theme_dim(self) -> int:
        return self.theme.shape[1]

    @property
    def grid_size(self) -> int:
        return self.content.shape[2]

    @property
    def content_dim(self) -> int:
        return self.content.shape[1]

    @property
    def flat_dim(self) -> int:
        return self.theme_dim + self.grid_size**2 * self.content_dim

    def flatten(self) -> Tensor:
        """(B, D_theme + N*N*D_content): theme first, then row-major cells."""
        b = self.batch_size
        cells = self.content.permute(0, 2, 3, 1).reshape(b, -1)
        return torch.cat([self.theme, cells], dim=1)

    @staticmethod
    def unflatten(flat: Tensor, theme_dim: int, grid_size: int, content_dim: int) -> "LatentCode":
        expected = theme_dim + grid_size**2 * content_dim
        if flat.dim() != 2 or flat.shape[1] != expected:
            raise ValueError(
                f"expected (B, {expected}) flat latent, got {tuple(flat.shape)}"
            )
        theme = flat[:, :theme_dim]
        cells = flat[:, theme_dim:].reshape(-1, grid_size, grid_size, content_dim)
        return LatentCode(theme=theme, content=cells.permute(0, 3, 1, 2))

    def clone(self) -> "LatentCode":
        return LatentCode(theme=self.theme.clone(), content=self.content.clone())

    def detach(self) -> "LatentCode":
        return LatentCode(theme=self.theme.detach(), content=self.content.detach())

    def to(self, *args, **kwargs) -> "LatentCode":
        return LatentCode(
            theme=self.theme.to(*args, **kwargs), content=self.content.to(*args, **kwargs)
        )
