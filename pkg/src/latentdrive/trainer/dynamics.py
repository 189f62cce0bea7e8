"""Stage-two training: the dynamics engine against latent discriminators."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch

from latentdrive.core import LatentCode, TrainingFault, kl_standard_normal
from latentdrive.engine import DynamicsEngine, EpsTriple
from latentdrive.latentdisc import LatentDiscriminators, sample_negative_actions
from latentdrive.toyworld.dataset import SequenceDataset
from latentdrive.trainer import checkpoint as ckpt
from latentdrive.trainer.config import TrainConfig
from latentdrive.trainer.data import SequenceBatcher, extract_latents
from latentdrive.trainer.losses import hinge_losses, mean_patch_score, r1_penalty
from latentdrive.trainer.pretrain import ADAM_BETAS, RunResult, TrainingAbort, load_pretrained
from latentdrive.trainer.schedule import warmup_count


def build_dynamics_models(config: TrainConfig, dtype=None):
    torch.manual_seed(config.seed + 1)
    engine = DynamicsEngine(config.engine_config())
    discs = LatentDiscriminators(config.disc_config())
    if dtype is not None and dtype != torch.float32:
        engine = engine.to(dtype)
        discs = discs.to(dtype)
    return engine, discs


def prepare_latents(
    codec, dataset: SequenceDataset, cache_path: Path | None = None
) -> np.ndarray:
    """Pre-extract posterior-mean latents for every frame, with a disk cache."""
    n, t, _, _ = dataset.metadata
    if cache_path is not None and cache_path.exists():
        cached = np.load(cache_path)
        if cached.shape[:2] == (n, t):
            return cached
    latents = extract_latents(codec, dataset)
    if cache_path is not None:
        tmp = cache_path.with_name(cache_path.stem + ".tmp.npy")
        np.save(tmp, latents)
        tmp.replace(cache_path)
    return latents


def _save_state(
    path: Path,
    config: TrainConfig,
    engine: DynamicsEngine,
    discs: LatentDiscriminators,
    opt_g,
    opt_d,
    eps_gen: torch.Generator,
    batch_rng: np.random.Generator,
    step: int,
    codec_ref: str,
) -> Path:
    arrays = {}
    arrays.update(ckpt.module_arrays("engine", engine))
    arrays.update(ckpt.module_arrays("discs", discs))
    opt_g_arrays, groups_g = ckpt.optimizer_arrays("opt_g", opt_g)
    opt_d_arrays, groups_d = ckpt.optimizer_arrays("opt_d", opt_d)
    arrays.update(opt_g_arrays)
    arrays.update(opt_d_arrays)
    arrays.update(ckpt.rng_arrays({"eps": eps_gen}))
    meta = {
        "step": step,
        "codec_ref": codec_ref,
        "numpy_rng": ckpt.numpy_rng_state(batch_rng),
        "opt_g_groups": groups_g,
        "opt_d_groups": groups_d,
    }
    return ckpt.save_checkpoint(path, "dynamics", config.to_flat(), arrays, meta)


def dynamics_run(
    config: TrainConfig,
    dataset_path: str | Path,
    codec_checkpoint: str | Path,
    out_dir: str | Path,
    resume: bool = True,
) -> RunResult:
    if config.stage != "dynamics":
        raise ValueError("config.stage must be 'dynamics'")
    codec_checkpoint = Path(codec_checkpoint)
    if not codec_checkpoint.exists():
        raise FileNotFoundError(f"codec checkpoint missing: {codec_checkpoint}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "dynamics.ldck"
    metrics_path = out_dir / "dynamics_metrics.ndjson"

    dtype = torch.float64 if config.dtype == "float64" else torch.float32
    dataset = SequenceDataset(dataset_path)
    codec, _, codec_cfg = load_pretrained(codec_checkpoint)
    if not config.engine_config().matches_codec(
        codec_cfg.theme_dim, codec_cfg.content_grid, codec_cfg.content_dim
    ):
        raise ValueError("engine config does not match codec latent dims")

    latents = prepare_latents(codec, dataset, out_dir / "latents.npy")
    actions = np.asarray(dataset.all_actions(), dtype=np.float32)
    n_sequences = latents.shape[0]
    if config.timesteps > latents.shape[1]:
        raise ValueError(
            f"config.timesteps {config.timesteps} exceeds dataset T {latents.shape[1]}"
        )
    latents = latents[:, : config.timesteps]
    actions = actions[:, : config.timesteps]

    engine, discs = build_dynamics_models(config, dtype)
    opt_g = torch.optim.Adam(engine.parameters(), lr=config.lr, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(
        list(discs.parameters()), lr=config.lr, betas=ADAM_BETAS
    )
    eps_gen = torch.Generator().manual_seed(config.seed + 303)
    batch_rng = np.random.default_rng(config.seed + 404)
    start_step = 0

    if resume and ckpt_path.exists():
        saved = ckpt.load_checkpoint(ckpt_path)
        ckpt.load_module(engine, saved, "engine")
        ckpt.load_module(discs, saved, "discs")
        ckpt.load_optimizer(opt_g, saved, "opt_g", saved.meta["opt_g_groups"])
        ckpt.load_optimizer(opt_d, saved, "opt_d", saved.meta["opt_d_groups"])
        ckpt.load_rng(saved, {"eps": eps_gen})
        batch_rng = ckpt.restore_numpy_rng(saved.meta["numpy_rng"])
        start_step = saved.meta["step"]

    batcher = SequenceBatcher(
        latents, actions[:, : config.timesteps - 1], config.batch, batch_rng
    )
    last_good = ckpt_path if ckpt_path.exists() else None

    with open(metrics_path, "a" if start_step > 0 else "w") as metrics_fh:
        t0 = time.monotonic()
        for step in range(start_step, config.steps):
            epoch = (step * config.batch) // n_sequences
            try:
                record = _dynamics_step(
                    config, engine, discs, opt_g, opt_d, batcher,
                    actions, eps_gen, batch_rng, epoch, dtype, step,
                )
            except TrainingFault as fault:
                raise TrainingAbort(str(fault), last_good) from fault
            if step % config.log_every == 0 or step == config.steps - 1:
                record.update(
                    {"step": step, "epoch": epoch, "wall_time": time.monotonic() - t0}
                )
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
            if (step + 1) % config.checkpoint_every == 0 or step == config.steps - 1:
                last_good = _save_state(
                    ckpt_path, config, engine, discs, opt_g, opt_d,
                    eps_gen, batch_rng, step + 1, str(codec_checkpoint),
                )
    if last_good is None or start_step >= config.steps:
        last_good = _save_state(
            ckpt_path, config, engine, discs, opt_g, opt_d,
            eps_gen, batch_rng, max(start_step, config.steps), str(codec_checkpoint),
        )
    return RunResult(ckpt_path, metrics_path, config.steps)


def _dynamics_step(
    config: TrainConfig,
    engine: DynamicsEngine,
    discs: LatentDiscriminators,
    opt_g,
    opt_d,
    batcher: SequenceBatcher,
    action_pool: np.ndarray,
    eps_gen: torch.Generator,
    batch_rng: np.random.Generator,
    epoch: int,
    dtype,
    step: int = 0,
) -> dict:
    ecfg = engine.config
    z_flat, acts = batcher.next(dtype=dtype)
    b, t, d = z_flat.shape
    teacher = [
        LatentCode.unflatten(z_flat[:, k], ecfg.theme_dim, ecfg.grid_size, ecfg.content_dim)
        for k in range(t)
    ]
    k = warmup_count(epoch, config.warmup_start, config.warmup_end_epoch)
    k = min(k, t)
    eps_seq = [EpsTriple.draw(ecfg, b, generator=eps_gen, dtype=dtype) for _ in range(t - 1)]

    outputs, _ = engine.rollout(
        teacher[0], acts, eps_seq=eps_seq, teacher_latents=teacher, warmup_k=k
    )
    gen_flat = torch.stack([o.z_next.flatten() for o in outputs], dim=1)  # (B, T-1, D)

    l_latent = config.latent_weight * torch.mean((gen_flat - z_flat[:, 1:]) ** 2)
    kl_adep = torch.stack(
        [kl_standard_normal(o.gauss_adep) for o in outputs]
    ).mean()
    kl_aindep = torch.stack(
        [kl_standard_normal(o.gauss_aindep) for o in outputs]
    ).mean()
    kl_theme = torch.stack(
        [kl_standard_normal(o.gauss_theme) for o in outputs]
    ).mean()
    from latentdrive.trainer.pretrain import kl_ramp

    ramp = kl_ramp(step, config.kl_warmup_steps)
    l_kl = ramp * (
        config.beta_adep * kl_adep
        + config.beta_aindep * kl_aindep
        + config.beta_theme * kl_theme
    )

    gen_seq = torch.cat([z_flat[:, :1], gen_flat], dim=1)  # seed + generated
    neg_actions = torch.from_numpy(
        sample_negative_actions(action_pool, (b, t - 1, ecfg.action_dim), batch_rng)
    ).to(dtype)

    # discriminator phase
    s_real, _ = discs.d_single(z_flat.reshape(b * t, d))
    s_fake, _ = discs.d_single(gen_flat.detach().reshape(b * (t - 1), d))
    real_t_scores, real_pairs = discs.d_temporal(z_flat, acts)
    fake_t_scores, _ = discs.d_temporal(gen_seq.detach(), acts)
    neg_t_scores, _ = discs.d_temporal(z_flat, neg_actions)

    real_all = torch.cat([s_real] + [s.flatten() for s in real_t_scores])
    fake_all = torch.cat(
        [s_fake]
        + [s.flatten() for s in fake_t_scores]
        + [s.flatten() for s in neg_t_scores]
    )
    d_adv, _ = hinge_losses(real_all, fake_all)
    l_action_real = discs.action_head.loss(real_pairs, acts)
    r1 = r1_penalty(
        lambda z: discs.d_single(z)[0], z_flat.reshape(b * t, d), config.r1_weight
    ) + r1_penalty(
        lambda z: mean_patch_score(discs.d_temporal(z, acts)[0]),
        z_flat,
        config.r1_weight,
    )
    d_total = d_adv + l_action_real + r1
    if not torch.isfinite(d_total):
        raise TrainingFault("d_total")
    opt_d.zero_grad()
    d_total.backward()
    opt_d.step()

    # generator phase
    s_fake_g, _ = discs.d_single(gen_flat.reshape(b * (t - 1), d))
    fake_t_g, gen_pairs = discs.d_temporal(gen_seq, acts)
    fake_all_g = torch.cat([s_fake_g] + [s.flatten() for s in fake_t_g])
    g_adv = -fake_all_g.mean()
    l_action_gen = discs.action_head.loss(gen_pairs, acts)
    g_total = l_latent + l_kl + g_adv + l_action_gen
    for name, value in (
        ("l_latent", l_latent), ("l_kl", l_kl),
        ("g_adv", g_adv), ("l_action", l_action_gen),
    ):
        if not torch.isfinite(value):
            raise TrainingFault(name)
    opt_g.zero_grad()
    g_total.backward()
    opt_g.step()

    record = {
        "warmup_k": k,
        "l_latent": float(l_latent.detach()),
        "kl_adep": float(kl_adep.detach()),
        "kl_aindep": float(kl_aindep.detach()),
        "kl_theme": float(kl_theme.detach()),
        "l_kl": float(l_kl.detach()),
        "g_adv": float(g_adv.detach()),
        "l_action_gen": float(l_action_gen.detach()),
        "l_action_real": float(l_action_real.detach()),
        "d_adv": float(d_adv.detach()),
        "r1": float(r1.detach()),
    }
    # logged total is the exact sum of the logged components
    record["g_total"] = (
        record["l_latent"] + record["l_kl"] + record["g_adv"] + record["l_action_gen"]
    )
    return record


def load_dynamics(path: str | Path):
    """(engine, config) from a dynamics checkpoint, eval mode."""
    saved = ckpt.load_checkpoint(Path(path))
    if saved.kind != "dynamics":
        raise ckpt.CheckpointError(f"{path}: expected dynamics checkpoint, got {saved.kind}")
    config = TrainConfig.from_flat(saved.config)
    engine = DynamicsEngine(config.engine_config())
    ckpt.load_module(engine, saved, "engine")
    engine.eval()
    return engine, config
