"""Stage-one training: the image codec plus image discriminators."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from latentdrive.core import TrainingFault
from latentdrive.codec import (
    Codec,
    MultiScaleDiscriminator,
    PerceptualMetric,
    discriminator_adversarial,
    generator_adversarial,
)
from latentdrive.codec.losses import kl_terms
from latentdrive.toyworld.dataset import SequenceDataset
from latentdrive.trainer import checkpoint as ckpt
from latentdrive.trainer.config import TrainConfig
from latentdrive.trainer.data import FrameBatcher
from latentdrive.trainer.losses import r1_penalty

ADAM_BETAS = (0.0, 0.99)


class TrainingAbort(RuntimeError):
    def __init__(self, message: str, last_checkpoint: Path | None):
        self.last_checkpoint = last_checkpoint
        suffix = f" (last good checkpoint: {last_checkpoint})" if last_checkpoint else ""
        super().__init__(message + suffix)


@dataclass
class RunResult:
    checkpoint_path: Path
    metrics_path: Path
    steps_completed: int


def _dtype_of(config: TrainConfig):
    return torch.float64 if config.dtype == "float64" else torch.float32


def perceptual_seed_for(config: TrainConfig) -> int:
    return config.seed * 7919 + 13


def build_pretrain_models(config: TrainConfig, dtype=None):
    """Seeded construction of codec + image discriminators."""
    torch.manual_seed(config.seed)
    codec_cfg = config.codec_config()
    codec = Codec(codec_cfg)
    disc = MultiScaleDiscriminator(
        codec_cfg.image_size,
        codec_cfg.d2_patches,
        codec_cfg.d3_patches,
        stem_width=codec_cfg.disc_stem,
        cap=codec_cfg.disc_cap,
    )
    if dtype is not None and dtype != torch.float32:
        codec = codec.to(dtype)
        disc = disc.to(dtype)
    return codec, disc


def _save_state(
    path: Path,
    config: TrainConfig,
    codec: Codec,
    disc: MultiScaleDiscriminator,
    opt_g,
    opt_d,
    eps_gen: torch.Generator,
    batch_rng: np.random.Generator,
    step: int,
    perceptual_seed: int,
) -> Path:
    arrays = {}
    arrays.update(ckpt.module_arrays("codec", codec))
    arrays.update(ckpt.module_arrays("disc", disc))
    opt_g_arrays, groups_g = ckpt.optimizer_arrays("opt_g", opt_g)
    opt_d_arrays, groups_d = ckpt.optimizer_arrays("opt_d", opt_d)
    arrays.update(opt_g_arrays)
    arrays.update(opt_d_arrays)
    arrays.update(ckpt.rng_arrays({"eps": eps_gen}))
    meta = {
        "step": step,
        "perceptual_seed": perceptual_seed,
        "numpy_rng": ckpt.numpy_rng_state(batch_rng),
        "opt_g_groups": groups_g,
        "opt_d_groups": groups_d,
    }
    return ckpt.save_checkpoint(path, "pretrain", config.to_flat(), arrays, meta)


def pretrain_run(
    config: TrainConfig,
    dataset_path: str | Path,
    out_dir: str | Path,
    resume: bool = True,
) -> RunResult:
    if config.stage != "pretrain":
        raise ValueError("config.stage must be 'pretrain'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "pretrain.ldck"
    metrics_path = out_dir / "pretrain_metrics.ndjson"

    dtype = _dtype_of(config)
    dataset = SequenceDataset(dataset_path)
    codec, disc = build_pretrain_models(config, dtype)
    perceptual_seed = perceptual_seed_for(config)
    perceptual = PerceptualMetric(perceptual_seed)
    if dtype != torch.float32:
        perceptual = perceptual.to(dtype)

    opt_g = torch.optim.Adam(codec.parameters(), lr=config.lr, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=ADAM_BETAS)
    eps_gen = torch.Generator().manual_seed(config.seed + 101)
    batch_rng = np.random.default_rng(config.seed + 202)
    start_step = 0

    if resume and ckpt_path.exists():
        saved = ckpt.load_checkpoint(ckpt_path)
        ckpt.load_module(codec, saved, "codec")
        ckpt.load_module(disc, saved, "disc")
        ckpt.load_optimizer(opt_g, saved, "opt_g", saved.meta["opt_g_groups"])
        ckpt.load_optimizer(opt_d, saved, "opt_d", saved.meta["opt_d_groups"])
        ckpt.load_rng(saved, {"eps": eps_gen})
        batch_rng = ckpt.restore_numpy_rng(saved.meta["numpy_rng"])
        start_step = saved.meta["step"]
        perceptual_seed = saved.meta["perceptual_seed"]
        perceptual = PerceptualMetric(perceptual_seed)
        if dtype != torch.float32:
            perceptual = perceptual.to(dtype)

    batcher = FrameBatcher(dataset, config.batch, batch_rng)
    last_good = ckpt_path if ckpt_path.exists() else None

    with open(metrics_path, "a" if start_step > 0 else "w") as metrics_fh:
        t0 = time.monotonic()
        for step in range(start_step, config.steps):
            try:
                record = _pretrain_step(
                    config, codec, disc, perceptual, opt_g, opt_d, batcher, eps_gen, dtype, step
                )
            except TrainingFault as fault:
                raise TrainingAbort(str(fault), last_good) from fault
            if step % config.log_every == 0 or step == config.steps - 1:
                record.update({"step": step, "wall_time": time.monotonic() - t0})
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
            if (step + 1) % config.checkpoint_every == 0 or step == config.steps - 1:
                last_good = _save_state(
                    ckpt_path, config, codec, disc, opt_g, opt_d,
                    eps_gen, batch_rng, step + 1, perceptual_seed,
                )
    if last_good is None or start_step >= config.steps:
        last_good = _save_state(
            ckpt_path, config, codec, disc, opt_g, opt_d,
            eps_gen, batch_rng, max(start_step, config.steps), perceptual_seed,
        )
    return RunResult(ckpt_path, metrics_path, config.steps)


def kl_ramp(step: int, warmup_steps: int) -> float:
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, step / warmup_steps)


def _pretrain_step(
    config: TrainConfig,
    codec: Codec,
    disc: MultiScaleDiscriminator,
    perceptual: PerceptualMetric,
    opt_g,
    opt_d,
    batcher: FrameBatcher,
    eps_gen: torch.Generator,
    dtype,
    step: int = 0,
) -> dict:
    x = batcher.next(dtype=dtype)
    z, theme_p, content_p = codec.encode_sample(x, generator=eps_gen)
    x_hat = codec.decode(z)

    # discriminator phase
    real_scores = disc(x)
    fake_scores = disc(x_hat.detach())
    d_adv = discriminator_adversarial(real_scores, fake_scores)
    r1 = (
        r1_penalty(lambda v: disc.d1(v), x, config.r1_weight)
        + r1_penalty(lambda v: disc.d2(v).flatten(1).mean(1), x, config.r1_weight)
        + r1_penalty(
            lambda v: disc.d3(F.avg_pool2d(v, 2)).flatten(1).mean(1), x, config.r1_weight
        )
    )
    d_total = d_adv + r1
    if not torch.isfinite(d_total):
        raise TrainingFault("d_total")
    opt_d.zero_grad()
    d_total.backward()
    opt_d.step()

    # generator phase
    recon = config.perceptual_weight * perceptual.distance(x, x_hat)
    ramp = kl_ramp(step, config.kl_warmup_steps)
    kl_theme, kl_content = kl_terms(
        theme_p, content_p, ramp * config.beta_theme, ramp * config.beta_content
    )
    g_adv = generator_adversarial(disc(x_hat))
    g_total = recon + kl_theme + kl_content + g_adv
    for name, value in (
        ("recon", recon), ("kl_theme", kl_theme),
        ("kl_content", kl_content), ("g_adv", g_adv),
    ):
        if not torch.isfinite(value):
            raise TrainingFault(name)
    opt_g.zero_grad()
    g_total.backward()
    opt_g.step()

    record = {
        "recon": float(recon.detach()),
        "kl_theme": float(kl_theme.detach()),
        "kl_content": float(kl_content.detach()),
        "g_adv": float(g_adv.detach()),
        "d_adv": float(d_adv.detach()),
        "r1": float(r1.detach()),
    }
    record["g_total"] = (
        record["recon"] + record["kl_theme"] + record["kl_content"] + record["g_adv"]
    )
    return record


def load_pretrained(path: str | Path):
    """(codec, perceptual, config) from a pretrain checkpoint, eval mode."""
    saved = ckpt.load_checkpoint(Path(path))
    if saved.kind != "pretrain":
        raise ckpt.CheckpointError(f"{path}: expected pretrain checkpoint, got {saved.kind}")
    config = TrainConfig.from_flat(saved.config)
    codec = Codec(config.codec_config())
    ckpt.load_module(codec, saved, "codec")
    codec.eval()
    perceptual = PerceptualMetric(saved.meta["perceptual_seed"])
    return codec, perceptual, config
