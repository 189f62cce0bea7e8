"""Differentiable simulation: gradient-based recovery of the actions and
stochastic inputs that make the engine reproduce a latent trajectory, plus
frame interpolation and replay with swapped inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from latentdrive.core import LatentCode
from latentdrive.engine import DynamicsEngine, EpsTriple

BOUNDS_PENALTY_WEIGHT = 10.0
EPS_BRANCHES = ("adep", "aindep", "theme")


class DiffSimDivergence(RuntimeError):
    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"objective became non-finite at iteration {iteration}")


@dataclass
class DiffSimProblem:
    target_latents: Tensor  # (T, latent_flat_dim): targets for steps 1..T
    lambda_action: float = 0.1
    lambda_eps: float = 0.01
    iterations: int = 500
    polish_iterations: int = 10  # L-BFGS rounds after the Adam phase
    step_size: float = 0.05
    mode: str = "full"  # full | last_frame_only
    lambda_smooth: float = 0.0  # intermediate smoothness (interpolation mode)
    action_bounds: tuple[float, float] | None = None  # (v_max, omega_max)
    init_actions: Tensor | None = None
    freeze_eps: frozenset[str] = frozenset()
    line_search: bool = False

    def __post_init__(self) -> None:
        if self.lambda_action < 0 or self.lambda_eps < 0 or self.lambda_smooth < 0:
            raise ValueError("regularizer weights must be >= 0")
        if self.target_latents.dim() != 2 or self.target_latents.shape[0] < 1:
            raise ValueError("target_latents must be (T, D) with T >= 1")
        if self.mode not in ("full", "last_frame_only"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.freeze_eps <= set(EPS_BRANCHES):
            raise ValueError(f"freeze_eps must be a subset of {EPS_BRANCHES}")


@dataclass
class RecoveredTrace:
    actions: np.ndarray  # (T, action_dim)
    eps_adep: np.ndarray  # (T, C, N, N)
    eps_aindep: np.ndarray  # (T, D_aindep)
    eps_theme: np.ndarray  # (T, D_theme)
    objective_history: list[float] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objective_history[-1]

    def eps_sequence(self, dtype=torch.float32) -> list[EpsTriple]:
        return [
            EpsTriple(
                adep=torch.from_numpy(self.eps_adep[t : t + 1]).to(dtype),
                aindep=torch.from_numpy(self.eps_aindep[t : t + 1]).to(dtype),
                theme=torch.from_numpy(self.eps_theme[t : t + 1]).to(dtype),
            )
            for t in range(self.actions.shape[0])
        ]

    def as_dict(self) -> dict:
        return {
            "actions": self.actions.tolist(),
            "eps_adep": self.eps_adep.tolist(),
            "eps_aindep": self.eps_aindep.tolist(),
            "eps_theme": self.eps_theme.tolist(),
            "objective_history": self.objective_history,
        }


def _rollout_outputs(engine, z_0, actions, eps_vars):
    steps = actions.shape[0]
    eps_seq = [
        EpsTriple(
            adep=eps_vars["adep"][t : t + 1],
            aindep=eps_vars["aindep"][t : t + 1],
            theme=eps_vars["theme"][t : t + 1],
        )
        for t in range(steps)
    ]
    outputs, _ = engine.rollout(z_0, actions.unsqueeze(0), eps_seq=eps_seq, warmup_k=1)
    return outputs


def _objective(engine, z_0, problem: DiffSimProblem, actions, eps_vars) -> Tensor:
    outputs = _rollout_outputs(engine, z_0, actions, eps_vars)
    generated = torch.stack([o.z_next.flatten()[0] for o in outputs])  # (T, D)

    if problem.mode == "full":
        recon = ((generated - problem.target_latents) ** 2).sum()
    else:
        recon = ((generated[-1] - problem.target_latents[-1]) ** 2).sum()
        if problem.lambda_smooth > 0:
            prev = torch.cat([z_0.flatten(), generated[:-1]])
            recon = recon + problem.lambda_smooth * ((generated - prev) ** 2).sum()

    total = recon
    if problem.lambda_action > 0 and actions.shape[0] > 1:
        total = total + problem.lambda_action * ((actions[1:] - actions[:-1]) ** 2).sum()
    if problem.lambda_eps > 0:
        for name in EPS_BRANCHES:
            total = total + problem.lambda_eps * (eps_vars[name] ** 2).sum()
    if problem.action_bounds is not None:
        v_max, omega_max = problem.action_bounds
        speed, omega = actions[:, 0], actions[:, 1]
        penalty = (
            torch.relu(speed - v_max) ** 2
            + torch.relu(-speed) ** 2
            + torch.relu(omega.abs() - omega_max) ** 2
        ).sum()
        total = total + BOUNDS_PENALTY_WEIGHT * penalty
    return total


def infer_actions(
    problem: DiffSimProblem, engine: DynamicsEngine, z_0: LatentCode
) -> RecoveredTrace:
    """Jointly optimize (actions, eps) so the engine reproduces the targets."""
    cfg = engine.config
    steps = problem.target_latents.shape[0]
    dtype = problem.target_latents.dtype
    if z_0.batch_size != 1:
        raise ValueError("diffsim works on single trajectories (batch 1)")

    engine.eval()
    for p in engine.parameters():
        p.requires_grad_(False)

    if problem.init_actions is not None:
        actions = problem.init_actions.detach().clone().to(dtype)
        if actions.shape != (steps, cfg.action_dim):
            raise ValueError(f"init_actions must be ({steps}, {cfg.action_dim})")
    else:
        actions = torch.zeros(steps, cfg.action_dim, dtype=dtype)
    actions.requires_grad_(True)

    n = cfg.grid_size
    eps_vars = {
        "adep": torch.zeros(steps, cfg.content_dim, n, n, dtype=dtype),
        "aindep": torch.zeros(steps, cfg.aindep_dim, dtype=dtype),
        "theme": torch.zeros(steps, cfg.theme_dim, dtype=dtype),
    }
    trainable = [actions]
    for name in EPS_BRANCHES:
        if name not in problem.freeze_eps:
            eps_vars[name].requires_grad_(True)
            trainable.append(eps_vars[name])

    history: list[float] = []
    if problem.line_search:
        _optimize_line_search(engine, z_0, problem, actions, eps_vars, trainable, history)
    else:
        _optimize_adam(engine, z_0, problem, actions, eps_vars, trainable, history)

    final_actions = actions.detach()
    if problem.action_bounds is not None:
        v_max, omega_max = problem.action_bounds
        final_actions = torch.stack(
            [
                final_actions[:, 0].clamp(0.0, v_max),
                final_actions[:, 1].clamp(-omega_max, omega_max),
            ],
            dim=1,
        )
    return RecoveredTrace(
        actions=final_actions.numpy().astype(np.float64),
        eps_adep=eps_vars["adep"].detach().numpy().astype(np.float64),
        eps_aindep=eps_vars["aindep"].detach().numpy().astype(np.float64),
        eps_theme=eps_vars["theme"].detach().numpy().astype(np.float64),
        objective_history=history,
    )


def _optimize_adam(engine, z_0, problem, actions, eps_vars, trainable, history):
    opt = torch.optim.Adam(trainable, lr=problem.step_size)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=problem.iterations)
    for iteration in range(problem.iterations):
        opt.zero_grad()
        obj = _objective(engine, z_0, problem, actions, eps_vars)
        value = float(obj.detach())
        if not math.isfinite(value):
            raise DiffSimDivergence(iteration)
        history.append(value)
        obj.backward()
        opt.step()
        sched.step()
    # quasi-Newton polish: Adam stalls well above the attainable floor
    if problem.polish_iterations > 0:
        polisher = torch.optim.LBFGS(
            trainable, max_iter=20, history_size=30, line_search_fn="strong_wolfe"
        )
        for _ in range(problem.polish_iterations):

            def closure():
                polisher.zero_grad()
                obj = _objective(engine, z_0, problem, actions, eps_vars)
                obj.backward()
                return obj

            polisher.step(closure)
    final = float(_objective(engine, z_0, problem, actions, eps_vars).detach())
    if not math.isfinite(final):
        raise DiffSimDivergence(problem.iterations)
    history.append(final)


def _optimize_line_search(engine, z_0, problem, actions, eps_vars, trainable, history):
    """Backtracking gradient descent: objective history is non-increasing."""
    step = problem.step_size
    obj = _objective(engine, z_0, problem, actions, eps_vars)
    value = float(obj.detach())
    if not math.isfinite(value):
        raise DiffSimDivergence(0)
    history.append(value)
    for iteration in range(problem.iterations):
        grads = torch.autograd.grad(obj, trainable)
        with torch.no_grad():
            trial_step = step
            for _ in range(30):
                for var, g in zip(trainable, grads):
                    var -= trial_step * g
                candidate = float(_objective(engine, z_0, problem, actions, eps_vars).detach())
                if math.isfinite(candidate) and candidate <= history[-1]:
                    trial_step *= 1.3
                    break
                for var, g in zip(trainable, grads):
                    var += trial_step * g
                trial_step *= 0.5
            else:
                candidate = history[-1]  # no acceptable step: stay put
            step = trial_step
        history.append(candidate)
        obj = _objective(engine, z_0, problem, actions, eps_vars)


def interpolate_frames(
    z_0: LatentCode,
    z_final: Tensor,
    gap: int,
    engine: DynamicsEngine,
    lambda_smooth: float = 0.1,
    **problem_kwargs,
) -> tuple[RecoveredTrace, Tensor]:
    """Recover a gap-length trajectory pinned only at the far endpoint.

    Returns the trace and the intermediate latents (gap, D) it produces.
    """
    if gap < 2:
        raise ValueError("interpolation needs a gap of at least 2 steps")
    flat_dim = z_0.flat_dim
    if z_final.shape != (flat_dim,):
        raise ValueError(f"z_final must be ({flat_dim},)")
    targets = torch.zeros(gap, flat_dim, dtype=z_final.dtype)
    targets[-1] = z_final
    problem = DiffSimProblem(
        target_latents=targets,
        mode="last_frame_only",
        lambda_smooth=lambda_smooth,
        **problem_kwargs,
    )
    trace = infer_actions(problem, engine, z_0)
    latents = replay_latents(z_0, trace, engine)
    return trace, latents


def replay_latents(z_0: LatentCode, trace: RecoveredTrace, engine: DynamicsEngine) -> Tensor:
    """Deterministic re-rollout of a trace: (T, flat_dim) latents for steps 1..T."""
    dtype = z_0.theme.dtype
    actions = torch.from_numpy(trace.actions).to(dtype).unsqueeze(0)
    outputs, _ = engine.rollout(
        z_0, actions, eps_seq=trace.eps_sequence(dtype=dtype), warmup_k=1
    )
    return torch.stack([o.z_next.flatten()[0] for o in outputs])


def replay(
    z_0: LatentCode,
    actions: np.ndarray,
    epsilons: tuple[np.ndarray, np.ndarray, np.ndarray],
    engine: DynamicsEngine,
    codec,
) -> np.ndarray:
    """Rollout + decode: (T+1, H, W, 3) uint8 frames, frame 0 seeded by z_0.

    actions and epsilons may come from different recovered traces (scenario
    blending).
    """
    from latentdrive.trainer.data import tensor_to_frames

    eps_adep, eps_aindep, eps_theme = epsilons
    steps = actions.shape[0]
    if not (eps_adep.shape[0] == eps_aindep.shape[0] == eps_theme.shape[0] == steps):
        raise ValueError("actions and epsilon sequences must have equal length")
    dtype = z_0.theme.dtype
    trace = RecoveredTrace(
        actions=np.asarray(actions, dtype=np.float64),
        eps_adep=np.asarray(eps_adep, dtype=np.float64),
        eps_aindep=np.asarray(eps_aindep, dtype=np.float64),
        eps_theme=np.asarray(eps_theme, dtype=np.float64),
        objective_history=[0.0],
    )
    with torch.no_grad():
        latents = replay_latents(z_0, trace, engine)
        codes = [z_0] + [
            LatentCode.unflatten(
                latents[t : t + 1], z_0.theme_dim, z_0.grid_size, z_0.content_dim
            )
            for t in range(steps)
        ]
        frames = [tensor_to_frames(codec.decode(code))[0] for code in codes]
    return np.stack(frames)


def recover_sequence_cli(
    engine_path: str | Path,
    codec_path: str | Path,
    data_path: str | Path,
    seq_index: int,
    interpolate_t: int | None = None,
    iterations: int | None = None,
) -> dict:
    """CLI backend: recover one dataset sequence, return a JSON-ready trace."""
    from latentdrive.toyworld.dataset import SequenceDataset
    from latentdrive.trainer.data import frames_to_tensor
    from latentdrive.trainer.dynamics import load_dynamics
    from latentdrive.trainer.pretrain import load_pretrained

    engine, _ = load_dynamics(engine_path)
    codec, _, _ = load_pretrained(codec_path)
    dataset = SequenceDataset(data_path)
    frames = dataset.frames(seq_index)
    with torch.no_grad():
        latents = codec.encode_mean(frames_to_tensor(frames)).flatten()
    z_0 = LatentCode.unflatten(
        latents[:1], codec.config.theme_dim, codec.config.grid_size, codec.config.content_dim
    )
    kwargs = {}
    if iterations is not None:
        kwargs["iterations"] = iterations
    if interpolate_t is not None:
        trace, _ = interpolate_frames(
            z_0, latents[interpolate_t], interpolate_t, engine, **kwargs
        )
    else:
        problem = DiffSimProblem(target_latents=latents[1:], **kwargs)
        trace = infer_actions(problem, engine, z_0)
    result = trace.as_dict()
    result["sequence"] = seq_index
    return result
