from latentdrive.trainer.checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from latentdrive.trainer.config import PRESETS, TrainConfig, load_train_config, read_config_file, write_config_file
from latentdrive.trainer.dynamics import build_dynamics_models, dynamics_run, load_dynamics
from latentdrive.trainer.losses import hinge_losses, mean_patch_score, r1_penalty
from latentdrive.trainer.pretrain import (
    RunResult,
    TrainingAbort,
    build_pretrain_models,
    load_pretrained,
    pretrain_run,
)
from latentdrive.trainer.schedule import warmup_count

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "PRESETS",
    "RunResult",
    "TrainConfig",
    "TrainingAbort",
    "build_dynamics_models",
    "build_pretrain_models",
    "dynamics_run",
    "hinge_losses",
    "load_checkpoint",
    "load_dynamics",
    "load_pretrained",
    "load_train_config",
    "mean_patch_score",
    "pretrain_run",
    "r1_penalty",
    "read_config_file",
    "save_checkpoint",
    "warmup_count",
    "write_config_file",
]
