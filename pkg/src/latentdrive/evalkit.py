"""Quantitative evaluation: action-consistency prediction and a Frechet
feature distance between real and generated clips.

The video embedder is a fixed, seeded random 3D conv net, so absolute
distances are not comparable to any published numbers; only orderings and
ratios are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from latentdrive.toyworld.dataset import SequenceDataset
from latentdrive.trainer.data import frames_to_tensor

LRELU_SLOPE = 0.2


# ---------------------------------------------------------------------------
# action-consistency predictor


class ActionPredictor(nn.Module):
    """CNN regressor from a channel-stacked frame pair to the transition action."""

    def __init__(self, image_size: int = 64, widths: tuple[int, ...] = (16, 32, 48, 64)):
        super().__init__()
        self.image_size = image_size
        convs = []
        prev = 6
        for w in widths:
            convs.append(nn.Conv2d(prev, w, 3, stride=2, padding=1))
            prev = w
        self.convs = nn.ModuleList(convs)
        feat = image_size // 2 ** len(widths)
        self.fc1 = nn.Linear(prev * feat * feat, 64)
        self.fc2 = nn.Linear(64, 2)

    def forward(self, frame_a: Tensor, frame_b: Tensor) -> Tensor:
        h = torch.cat([frame_a, frame_b], dim=1)
        for conv in self.convs:
            h = F.leaky_relu(conv(h), LRELU_SLOPE)
        h = F.leaky_relu(self.fc1(h.flatten(1)), LRELU_SLOPE)
        return self.fc2(h)


@dataclass
class PredictorResult:
    predictor: ActionPredictor
    heldout_mse: float
    heldout_baseline: float  # mean-action predictor on the same split
    action_mean: np.ndarray


def _pair_arrays(dataset: SequenceDataset, indices: np.ndarray):
    frames_a, frames_b, actions = [], [], []
    for i in indices:
        seq_frames = dataset.frames(int(i))
        seq_actions = dataset.actions(int(i))
        frames_a.append(seq_frames[:-1])
        frames_b.append(seq_frames[1:])
        actions.append(seq_actions[:-1])
    return (
        np.concatenate(frames_a),
        np.concatenate(frames_b),
        np.concatenate(actions),
    )


def train_action_predictor(
    dataset: SequenceDataset,
    steps: int = 1500,
    batch: int = 32,
    lr: float = 2e-3,
    seed: int = 0,
    train_fraction: float = 0.9,
    max_sequences: int | None = 512,
) -> PredictorResult:
    """Train on real frame pairs with MSE; report held-out MSE and baseline."""
    n, t, h, _ = dataset.metadata
    if t < 2:
        raise ValueError("dataset needs T >= 2")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    if max_sequences is not None:
        order = order[:max_sequences]
    split = max(1, int(len(order) * train_fraction))
    train_idx, test_idx = order[:split], order[split:]
    if len(test_idx) == 0:
        raise ValueError("not enough sequences for a held-out split")

    fa, fb, acts = _pair_arrays(dataset, train_idx)
    torch.manual_seed(seed)
    predictor = ActionPredictor(image_size=h)
    opt = torch.optim.Adam(predictor.parameters(), lr=lr)
    n_pairs = fa.shape[0]
    for _ in range(steps):
        idx = rng.integers(0, n_pairs, size=batch)
        pa = frames_to_tensor(fa[idx])
        pb = frames_to_tensor(fb[idx])
        target = torch.from_numpy(acts[idx])
        opt.zero_grad()
        loss = F.mse_loss(predictor(pa, pb), target)
        loss.backward()
        opt.step()

    predictor.eval()
    ta, tb, t_acts = _pair_arrays(dataset, test_idx)
    with torch.no_grad():
        preds = _predict_batched(predictor, ta, tb)
    heldout = float(np.mean((preds - t_acts) ** 2))
    action_mean = acts.mean(axis=0)
    baseline = float(np.mean((t_acts - action_mean[None, :]) ** 2))
    return PredictorResult(predictor, heldout, baseline, action_mean)


def _predict_batched(predictor: ActionPredictor, fa: np.ndarray, fb: np.ndarray, chunk: int = 64):
    out = []
    for start in range(0, fa.shape[0], chunk):
        stop = start + chunk
        out.append(
            predictor(frames_to_tensor(fa[start:stop]), frames_to_tensor(fb[start:stop])).numpy()
        )
    return np.concatenate(out)


def action_consistency_score(
    predictor: ActionPredictor,
    generated_frames: np.ndarray,  # (n, T, H, W, 3) uint8
    true_actions: np.ndarray,  # (n, T-1, 2)
) -> float:
    """MSE between actions predicted from generated pairs and the inputs."""
    n, t = generated_frames.shape[:2]
    if true_actions.shape[:2] != (n, t - 1):
        raise ValueError(
            f"actions must be ({n}, {t - 1}, 2), got {true_actions.shape}"
        )
    fa = generated_frames[:, :-1].reshape(-1, *generated_frames.shape[2:])
    fb = generated_frames[:, 1:].reshape(-1, *generated_frames.shape[2:])
    with torch.no_grad():
        preds = _predict_batched(predictor, fa, fb)
    return float(np.mean((preds - true_actions.reshape(-1, 2)) ** 2))


# ---------------------------------------------------------------------------
# Frechet feature distance


class ClipEmbedder(nn.Module):
    """Fixed random 3D conv embedder; the seed pins it forever.

    Clips enter as six channels: the RGB frames plus forward temporal
    differences, so motion statistics reach the embedding directly.
    """

    def __init__(self, seed: int = 7, channels: tuple[int, ...] = (8, 16, 32), embed_dim: int = 48):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        weights = []
        prev = 6
        for ch in channels:
            w = torch.randn(ch, prev, 3, 3, 3, generator=gen) * math.sqrt(2.0 / (prev * 27))
            weights.append(w)
            prev = ch
        for i, w in enumerate(weights):
            self.register_buffer(f"w{i}", w)
        proj = torch.randn(embed_dim, prev, generator=gen) * math.sqrt(1.0 / prev)
        self.register_buffer("proj", proj)
        self.n_layers = len(channels)
        self.embed_dim = embed_dim

    def forward(self, clips: Tensor) -> Tensor:
        """clips: (B, 3, T, H, W) in [-1, 1] -> (B, embed_dim)."""
        diffs = torch.zeros_like(clips)
        diffs[:, :, :-1] = clips[:, :, 1:] - clips[:, :, :-1]
        h = torch.cat([clips, 4.0 * diffs], dim=1)
        for i in range(self.n_layers):
            h = F.leaky_relu(
                F.conv3d(h, getattr(self, f"w{i}"), stride=2, padding=1), LRELU_SLOPE
            )
        pooled = h.mean(dim=(2, 3, 4))
        return pooled @ self.proj.T

    def embed_frames(self, frames: np.ndarray, chunk: int = 16) -> np.ndarray:
        """frames: (n, T, H, W, 3) uint8 -> (n, embed_dim) float64."""
        out = []
        with torch.no_grad():
            for start in range(0, frames.shape[0], chunk):
                x = frames_to_tensor(frames[start : start + chunk])  # (b, T, 3, H, W)
                x = x.movedim(1, 2)
                out.append(self(x).numpy())
        return np.concatenate(out).astype(np.float64)


def frechet_from_moments(
    mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray
) -> float:
    """||mu1-mu2||^2 + Tr(cov1 + cov2 - 2 (cov1 cov2)^(1/2))."""
    diff = mu1 - mu2
    prod, _ = scipy.linalg.sqrtm(cov1 @ cov2, disp=False)
    if np.iscomplexobj(prod):
        prod = prod.real
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(prod))


def frechet_from_embeddings(emb1: np.ndarray, emb2: np.ndarray, jitter: float = 1e-6) -> float:
    if emb1.shape[0] < 2 or emb2.shape[0] < 2:
        raise ValueError("need at least 2 embeddings per side")
    mu1, mu2 = emb1.mean(axis=0), emb2.mean(axis=0)
    cov1 = np.cov(emb1, rowvar=False) + jitter * np.eye(emb1.shape[1])
    cov2 = np.cov(emb2, rowvar=False) + jitter * np.eye(emb2.shape[1])
    return frechet_from_moments(mu1, cov1, mu2, cov2)


def frechet_feature_distance(
    real_frames: np.ndarray,
    generated_frames: np.ndarray,
    embedder: ClipEmbedder | None = None,
    min_clips: int = 32,
) -> float:
    """Frechet distance between embedded real and generated clip sets."""
    if real_frames.shape[0] < min_clips or generated_frames.shape[0] < min_clips:
        raise ValueError(f"need at least {min_clips} clips per side")
    embedder = embedder or ClipEmbedder()
    return frechet_from_embeddings(
        embedder.embed_frames(real_frames), embedder.embed_frames(generated_frames)
    )


# ---------------------------------------------------------------------------
# report assembly


@dataclass
class EvalReport:
    action_prediction_loss: float
    mean_action_baseline: float
    frechet_distance: float
    n_sequences: int

    def __post_init__(self) -> None:
        if min(self.action_prediction_loss, self.mean_action_baseline, self.frechet_distance) < 0:
            raise ValueError("report metrics must be >= 0")

    def as_dict(self) -> dict:
        return {
            "action_prediction_loss": self.action_prediction_loss,
            "mean_action_baseline": self.mean_action_baseline,
            "frechet_distance": self.frechet_distance,
            "n_sequences": self.n_sequences,
        }


def rollout_frames(
    codec,
    engine,
    dataset: SequenceDataset,
    indices: np.ndarray,
    timesteps: int,
    seed: int = 0,
) -> np.ndarray:
    """Autoregressive rollouts seeded by each sequence's first frame: uint8."""
    from latentdrive.core import LatentCode
    from latentdrive.engine import EpsTriple
    from latentdrive.trainer.data import tensor_to_frames

    gen = torch.Generator().manual_seed(seed)
    cfg = codec.config
    out = []
    with torch.no_grad():
        for i in indices:
            frames = dataset.frames(int(i))[:timesteps]
            actions = torch.from_numpy(dataset.actions(int(i))[: timesteps - 1])
            z0 = codec.encode_mean(frames_to_tensor(frames[:1]))
            eps_seq = [
                EpsTriple.draw(engine.config, 1, generator=gen)
                for _ in range(timesteps - 1)
            ]
            outputs, _ = engine.rollout(z0, actions.unsqueeze(0), eps_seq=eps_seq, warmup_k=1)
            codes = [z0] + [o.z_next for o in outputs]
            decoded = [tensor_to_frames(codec.decode(code))[0] for code in codes]
            out.append(np.stack(decoded))
    return np.stack(out)


def evaluate_checkpoints(
    codec_path: str | Path,
    engine_path: str | Path,
    data_path: str | Path,
    n_sequences: int = 64,
    predictor: PredictorResult | None = None,
    seed: int = 0,
) -> EvalReport:
    from latentdrive.trainer.dynamics import load_dynamics
    from latentdrive.trainer.pretrain import load_pretrained

    codec, _, _ = load_pretrained(codec_path)
    engine, engine_cfg = load_dynamics(engine_path)
    dataset = SequenceDataset(data_path)
    timesteps = min(engine_cfg.timesteps, dataset.metadata[1])

    if predictor is None:
        predictor = train_action_predictor(dataset, seed=seed)

    rng = np.random.default_rng(seed)
    indices = rng.choice(len(dataset), size=min(n_sequences, len(dataset)), replace=False)
    generated = rollout_frames(codec, engine, dataset, indices, timesteps, seed=seed)
    true_actions = np.stack(
        [dataset.actions(int(i))[: timesteps - 1] for i in indices]
    )
    score = action_consistency_score(predictor.predictor, generated, true_actions)
    baseline = float(
        np.mean((true_actions.reshape(-1, 2) - predictor.action_mean[None, :]) ** 2)
    )
    real = np.stack([dataset.frames(int(i))[:timesteps] for i in indices])
    frechet = frechet_feature_distance(real, generated)
    return EvalReport(
        action_prediction_loss=score,
        mean_action_baseline=baseline,
        frechet_distance=frechet,
        n_sequences=len(indices),
    )
