"""Adversarial losses and the R1 gradient penalty."""

from __future__ import annotations

from typing import Callable, Iterable

import torch
import torch.nn.functional as F
from torch import Tensor

from latentdrive.core import TrainingFault


def hinge_losses(real_scores: Tensor, fake_scores: Tensor) -> tuple[Tensor, Tensor]:
    """(discriminator, generator) hinge losses over raw score arrays."""
    if real_scores.numel() == 0 or fake_scores.numel() == 0:
        raise ValueError("score arrays must be non-empty")
    d_loss = F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()
    g_loss = -fake_scores.mean()
    return d_loss, g_loss


def r1_penalty(
    score_fn: Callable[[Tensor], Tensor], real_inputs: Tensor, weight: float = 1.0
) -> Tensor:
    """weight * 0.5 * E_batch[ ||d score / d input||^2 ] on true data.

    score_fn must map inputs to per-sample scalars (patch critics should
    average their patches first).
    """
    x = real_inputs.detach().requires_grad_(True)
    scores = score_fn(x)
    if not scores.requires_grad:
        # constant discriminator: zero gradient everywhere
        return x.new_zeros(())
    grad = torch.autograd.grad(scores.sum(), x, create_graph=True)[0]
    if not torch.isfinite(grad).all():
        raise TrainingFault("r1_penalty", "gradient is non-finite")
    penalty = 0.5 * grad.reshape(grad.shape[0], -1).pow(2).sum(dim=1).mean()
    return weight * penalty


def mean_patch_score(scores: Iterable[Tensor] | Tensor) -> Tensor:
    """Reduce one or several patch-score arrays to a per-sample scalar."""
    if isinstance(scores, Tensor):
        scores = (scores,)
    total = None
    for s in scores:
        per_sample = s.reshape(s.shape[0], -1).mean(dim=1)
        total = per_sample if total is None else total + per_sample
    return total
