"""Batch assembly and latent pre-extraction."""

from __future__ import annotations

import numpy as np
import torch
from torch import Tensor

from latentdrive.core import LatentCode
from latentdrive.codec.model import Codec
from latentdrive.toyworld.dataset import SequenceDataset


def frames_to_tensor(frames: np.ndarray, dtype=torch.float32) -> Tensor:
    """uint8 (..., H, W, 3) -> float (..., 3, H, W) in [-1, 1]."""
    x = torch.from_numpy(np.ascontiguousarray(frames)).to(dtype)
    x = x / 127.5 - 1.0
    return x.movedim(-1, -3)


def tensor_to_frames(x: Tensor) -> np.ndarray:
    """float (..., 3, H, W) in [-1, 1] -> uint8 (..., H, W, 3)."""
    x = ((x.detach().clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return x.movedim(-3, -1).cpu().numpy()


class FrameBatcher:
    """Uniform random single frames for codec pretraining."""

    def __init__(self, dataset: SequenceDataset, batch: int, rng: np.random.Generator):
        self.dataset = dataset
        self.batch = batch
        self.rng = rng

    def next(self, dtype=torch.float32) -> Tensor:
        n, t, h, w = self.dataset.metadata
        seqs = self.rng.integers(0, n, size=self.batch)
        times = self.rng.integers(0, t, size=self.batch)
        frames = np.stack([self.dataset.frame(int(i), int(k)) for i, k in zip(seqs, times)])
        return frames_to_tensor(frames, dtype=dtype)


class SequenceBatcher:
    """Random full sequences of pre-extracted latents plus their actions."""

    def __init__(
        self,
        latents: np.ndarray,  # (n, T, latent_dim) float32
        actions: np.ndarray,  # (n, T-1, action_dim): one per transition
        batch: int,
        rng: np.random.Generator,
    ):
        if latents.shape[0] != actions.shape[0] or actions.shape[1] != latents.shape[1] - 1:
            raise ValueError(
                f"need actions (n, T-1, A) for latents {latents.shape[:2]}, "
                f"got {actions.shape[:2]}"
            )
        self.latents = latents
        self.actions = actions
        self.batch = batch
        self.rng = rng

    def next(self, dtype=torch.float32) -> tuple[Tensor, Tensor]:
        n = self.latents.shape[0]
        idx = self.rng.integers(0, n, size=self.batch)
        z = torch.from_numpy(self.latents[idx].copy()).to(dtype)
        a = torch.from_numpy(self.actions[idx].copy()).to(dtype)
        return z, a


def extract_latents(
    codec: Codec, dataset: SequenceDataset, batch_frames: int = 64
) -> np.ndarray:
    """Posterior-mean latents for every frame: (n, T, latent_flat_dim) float32."""
    n, t, _, _ = dataset.metadata
    flat_dim = codec.config.latent_flat_dim
    out = np.empty((n * t, flat_dim), dtype=np.float32)
    codec.eval()
    with torch.no_grad():
        for start in range(0, n * t, batch_frames):
            stop = min(start + batch_frames, n * t)
            frames = np.stack(
                [dataset.frame(k // t, k % t) for k in range(start, stop)]
            )
            z = codec.encode_mean(frames_to_tensor(frames))
            out[start:stop] = z.flatten().numpy()
    return out.reshape(n, t, flat_dim)


def unflatten_batch(flat: Tensor, theme_dim: int, grid: int, content_dim: int) -> LatentCode:
    return LatentCode.unflatten(flat, theme_dim, grid, content_dim)
