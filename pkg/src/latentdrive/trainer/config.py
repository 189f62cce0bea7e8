"""Training configuration: flat dotted-key text files and presets."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from latentdrive.codec.config import CodecConfig
from latentdrive.engine.config import EngineConfig
from latentdrive.latentdisc import LatentDiscConfig

# dotted config key -> TrainConfig attribute
KEY_MAP = {
    "stage": "stage",
    "profile.image_size": "image_size",
    "latent.theme_dim": "theme_dim",
    "latent.content_grid": "content_grid",
    "latent.content_dim": "content_dim",
    "engine.conv_channels": "conv_channels",
    "engine.linear_dim": "linear_dim",
    "engine.aindep_dim": "aindep_dim",
    "engine.fused_channels": "fused_channels",
    "disc.feat_dim": "feat_dim",
    "loss.beta_theme": "beta_theme",
    "loss.beta_content": "beta_content",
    "loss.beta_adep": "beta_adep",
    "loss.beta_aindep": "beta_aindep",
    "loss.latent_weight": "latent_weight",
    "loss.perceptual_weight": "perceptual_weight",
    "loss.r1_weight": "r1_weight",
    "loss.kl_warmup_steps": "kl_warmup_steps",
    "train.lr": "lr",
    "train.steps": "steps",
    "train.batch": "batch",
    "train.timesteps": "timesteps",
    "train.dtype": "dtype",
    "train.log_every": "log_every",
    "train.checkpoint_every": "checkpoint_every",
    "warmup.start": "warmup_start",
    "warmup.end_epoch": "warmup_end_epoch",
    "seed": "seed",
}
ATTR_MAP = {v: k for k, v in KEY_MAP.items()}


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "pretrain"
    image_size: int = 64
    theme_dim: int = 32
    content_grid: int = 4
    content_dim: int = 16
    conv_channels: int = 32
    linear_dim: int = 160
    aindep_dim: int = 128
    fused_channels: int = 24
    feat_dim: int = 192
    beta_theme: float = 1.0
    beta_content: float = 2.0
    beta_adep: float = 0.1
    beta_aindep: float = 0.1
    latent_weight: float = 10.0
    perceptual_weight: float = 25.0
    r1_weight: float = 10.0
    kl_warmup_steps: int = 0  # linear beta ramp-in; 0 disables
    lr: float = 0.002
    steps: int = 4000
    batch: int = 8
    timesteps: int = 16
    dtype: str = "float32"
    log_every: int = 25
    checkpoint_every: int = 1000
    warmup_start: int = 8
    warmup_end_epoch: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stage not in ("pretrain", "dynamics"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.warmup_start < 1:
            raise ValueError("warmup.start must be >= 1")
        for name in ("beta_theme", "beta_content", "beta_adep", "beta_aindep"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("train.dtype must be float32 or float64")

    def to_flat(self) -> dict:
        return {ATTR_MAP[f.name]: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_flat(cls, flat: dict) -> "TrainConfig":
        kwargs = {}
        for key, value in flat.items():
            if key not in KEY_MAP:
                raise KeyError(f"unknown config key {key!r}")
            kwargs[KEY_MAP[key]] = value
        return cls(**kwargs)

    def codec_config(self) -> CodecConfig:
        if self.image_size == 256:
            base = CodecConfig.paper
        else:
            base = CodecConfig.desk
        return base(
            image_size=self.image_size,
            theme_dim=self.theme_dim,
            grid_size=self.content_grid,
            content_dim=self.content_dim,
        )

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            grid_size=self.content_grid,
            content_dim=self.content_dim,
            theme_dim=self.theme_dim,
            conv_channels=self.conv_channels,
            linear_dim=self.linear_dim,
            aindep_dim=self.aindep_dim,
            fused_channels=self.fused_channels,
        )

    def disc_config(self) -> LatentDiscConfig:
        latent_dim = self.theme_dim + self.content_grid**2 * self.content_dim
        if self.image_size == 256:
            return LatentDiscConfig.paper(latent_dim=latent_dim, feat_dim=self.feat_dim)
        return LatentDiscConfig.desk(latent_dim=latent_dim, feat_dim=self.feat_dim)


def parse_value(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def read_config_file(path: str | Path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    flat = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        flat[key.strip()] = parse_value(value)
    return flat


def write_config_file(path: str | Path, flat: dict) -> None:
    lines = [f"{key} = {value}" for key, value in flat.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_train_config(path: str | Path) -> TrainConfig:
    return TrainConfig.from_flat(read_config_file(path))


# Presets. Desk profiles are sized to train in minutes on one CPU core; the
# paper-scale presets document the published hyperparameters and are not
# meant to be run here.
PRESETS: dict[str, TrainConfig] = {
    # desk betas are rescaled: KL is summed over dims, and desk-scale
    # perceptual distances are far smaller than at 256px, so the published
    # beta values collapse the posterior here
    "desk_pretrain": TrainConfig(
        stage="pretrain",
        lr=0.002,
        steps=2400,
        batch=4,
        beta_theme=0.005,
        beta_content=0.002,
        kl_warmup_steps=800,
        r1_weight=10.0,
        seed=1234,
    ),
    "desk_dynamics": TrainConfig(
        stage="dynamics",
        lr=0.0003,
        steps=3000,
        batch=4,
        timesteps=16,
        beta_adep=0.1,
        beta_aindep=0.1,
        beta_theme=1.0,
        r1_weight=1.0,
        warmup_start=8,
        warmup_end_epoch=20,
        seed=1234,
    ),
    "paper_pretrain": TrainConfig(
        stage="pretrain",
        image_size=256,
        theme_dim=128,
        content_dim=64,
        lr=0.002,
        steps=310_000,
        batch=16,
        beta_theme=1.0,
        beta_content=2.0,
    ),
    "paper_dynamics": TrainConfig(
        stage="dynamics",
        image_size=256,
        theme_dim=128,
        content_dim=64,
        conv_channels=128,
        linear_dim=1024,
        aindep_dim=1024,
        fused_channels=48,
        feat_dim=1024,
        lr=0.0001,
        steps=400_000,
        batch=128,
        timesteps=32,
        beta_adep=0.1,
        beta_aindep=0.1,
        beta_theme=1.0,
        warmup_start=18,
        warmup_end_epoch=100,
    ),
}
