"""Structured image distance from a fixed, seeded random feature extractor.

Stands in for a pretrained perceptual network: four strided conv layers with
seed-deterministic random weights, frozen forever. The seed travels with the
checkpoint so the metric is stable across runs and machines.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

PIXEL_L1_WEIGHT = 0.1


class PerceptualMetric(nn.Module):
    def __init__(self, seed: int, channels: tuple[int, ...] = (12, 24, 32, 32)):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        weights = []
        prev = 3
        for ch in channels:
            w = torch.randn(ch, prev, 3, 3, generator=gen) * math.sqrt(2.0 / (prev * 9))
            weights.append(w)
            prev = ch
        for i, w in enumerate(weights):
            self.register_buffer(f"w{i}", w)
        self.n_layers = len(channels)

    def features(self, x: Tensor) -> list[Tensor]:
        feats = []
        h = x
        for i in range(self.n_layers):
            h = F.leaky_relu(F.conv2d(h, getattr(self, f"w{i}"), stride=2, padding=1), 0.2)
            feats.append(h)
        return feats

    def distance(self, x: Tensor, y: Tensor) -> Tensor:
        """Mean over the batch of the feature-space distance."""
        total = PIXEL_L1_WEIGHT * (x - y).abs().mean(dim=(1, 2, 3))
        for fx, fy in zip(self.features(x), self.features(y)):
            total = total + ((fx - fy) ** 2).mean(dim=(1, 2, 3))
        return total.mean()
