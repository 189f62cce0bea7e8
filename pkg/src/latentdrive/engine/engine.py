"""The dynamics engine: one latent step and multi-step rollouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import torch
from torch import Tensor, nn

from latentdrive.core import GaussianParams, LatentCode, reparameterize
from latentdrive.engine.branches import ActionBranchHeads, ConvBranch, IndepBranch
from latentdrive.engine.config import EngineConfig
from latentdrive.engine.fusion import ContentFusion


@dataclass
class EngineState:
    """Recurrent state of both branches."""

    h_conv: Tensor
    c_conv: Tensor
    h_lin: Tensor
    c_lin: Tensor

    @classmethod
    def zeros(
        cls, config: EngineConfig, batch: int, dtype=torch.float32, device=None
    ) -> "EngineState":
        n = config.grid_size
        return cls(
            h_conv=torch.zeros(batch, config.conv_channels, n, n, dtype=dtype, device=device),
            c_conv=torch.zeros(batch, config.conv_channels, n, n, dtype=dtype, device=device),
            h_lin=torch.zeros(batch, config.linear_dim, dtype=dtype, device=device),
            c_lin=torch.zeros(batch, config.linear_dim, dtype=dtype, device=device),
        )

    def detach(self) -> "EngineState":
        return EngineState(
            self.h_conv.detach(), self.c_conv.detach(),
            self.h_lin.detach(), self.c_lin.detach(),
        )

    def clone(self) -> "EngineState":
        return EngineState(
            self.h_conv.clone(), self.c_conv.clone(),
            self.h_lin.clone(), self.c_lin.clone(),
        )


class EpsTriple(NamedTuple):
    """Stochastic inputs for one step, one per Gaussian head."""

    adep: Tensor
    aindep: Tensor
    theme: Tensor

    @classmethod
    def zeros(
        cls, config: EngineConfig, batch: int, dtype=torch.float32, device=None
    ) -> "EpsTriple":
        n = config.grid_size
        return cls(
            adep=torch.zeros(batch, config.content_dim, n, n, dtype=dtype, device=device),
            aindep=torch.zeros(batch, config.aindep_dim, dtype=dtype, device=device),
            theme=torch.zeros(batch, config.theme_dim, dtype=dtype, device=device),
        )

    @classmethod
    def draw(
        cls,
        config: EngineConfig,
        batch: int,
        generator: torch.Generator | None = None,
        dtype=torch.float32,
        device=None,
    ) -> "EpsTriple":
        n = config.grid_size
        return cls(
            adep=torch.randn(batch, config.content_dim, n, n, generator=generator, dtype=dtype, device=device),
            aindep=torch.randn(batch, config.aindep_dim, generator=generator, dtype=dtype, device=device),
            theme=torch.randn(batch, config.theme_dim, generator=generator, dtype=dtype, device=device),
        )


@dataclass
class EngineStepOutput:
    z_next: LatentCode
    z_adep: Tensor
    z_aindep: Tensor
    gauss_adep: GaussianParams
    gauss_aindep: GaussianParams
    gauss_theme: GaussianParams


class PartialEpsError(ValueError):
    """Some eps branches supplied and others not; no silent mixing."""


def _validate_eps(eps) -> "EpsTriple | None":
    if eps is None:
        return None
    if isinstance(eps, EpsTriple):
        return eps
    adep, aindep, theme = eps
    given = [adep is not None, aindep is not None, theme is not None]
    if all(given):
        return EpsTriple(adep, aindep, theme)
    if not any(given):
        return None
    raise PartialEpsError(
        "eps must specify all of (adep, aindep, theme) or none; got partial "
        f"({'given' if given[0] else 'none'}, {'given' if given[1] else 'none'}, "
        f"{'given' if given[2] else 'none'})"
    )


class DynamicsEngine(nn.Module):
    def __init__(self, config: EngineConfig):
        super().__init__()
        self.config = config
        self.conv_branch = ConvBranch(config)
        self.heads = ActionBranchHeads(config)
        self.indep_branch = IndepBranch(config)
        self.fusion = ContentFusion(config)

    def initial_state(self, batch: int, dtype=torch.float32, device=None) -> EngineState:
        return EngineState.zeros(self.config, batch, dtype=dtype, device=device)

    def step(
        self,
        state: EngineState,
        z: LatentCode,
        action: Tensor,
        eps: EpsTriple | tuple | None = None,
        generator: torch.Generator | None = None,
        aindep_override: Tensor | None = None,
    ) -> tuple[EngineState, EngineStepOutput]:
        """One latent transition. Deterministic when eps is fully specified."""
        eps = _validate_eps(eps)
        if eps is None:
            eps = EpsTriple.draw(
                self.config, z.batch_size, generator=generator,
                dtype=z.theme.dtype, device=z.theme.device,
            )

        h_conv, c_conv = self.conv_branch(state.h_conv, state.c_conv, z, action)
        gauss_adep, gauss_theme = self.heads(h_conv)
        h_lin, c_lin, gauss_aindep = self.indep_branch(state.h_lin, state.c_lin, z)

        z_adep = reparameterize(gauss_adep, epsilon=eps.adep)
        z_aindep = reparameterize(gauss_aindep, epsilon=eps.aindep)
        z_theme = reparameterize(gauss_theme, epsilon=eps.theme)
        fused_aindep = aindep_override if aindep_override is not None else z_aindep
        z_content = self.fusion(z_adep, fused_aindep)

        out = EngineStepOutput(
            z_next=LatentCode(theme=z_theme, content=z_content),
            z_adep=z_adep,
            z_aindep=z_aindep,
            gauss_adep=gauss_adep,
            gauss_aindep=gauss_aindep,
            gauss_theme=gauss_theme,
        )
        return EngineState(h_conv, c_conv, h_lin, c_lin), out

    def rollout(
        self,
        z_0: LatentCode,
        actions: Tensor,
        eps_seq: Sequence[EpsTriple] | None = None,
        teacher_latents: Sequence[LatentCode] | None = None,
        warmup_k: int = 1,
        generator: torch.Generator | None = None,
        state: EngineState | None = None,
    ) -> tuple[list[EngineStepOutput], EngineState]:
        """Run T-1 steps from z_0 given actions (B, T-1, A).

        Inputs for t < warmup_k come from teacher_latents; afterwards the
        engine consumes its own outputs. Returns outputs for t = 1..T-1.
        """
        if actions.dim() != 3:
            raise ValueError(f"actions must be (B, T-1, A), got {tuple(actions.shape)}")
        steps = actions.shape[1]
        total = steps + 1
        if not (1 <= warmup_k <= total):
            raise ValueError(f"warmup_k {warmup_k} outside [1, {total}]")
        if teacher_latents is None:
            if warmup_k > 1:
                raise ValueError("warmup_k > 1 requires teacher_latents")
        elif len(teacher_latents) < warmup_k:
            raise ValueError(
                f"teacher_latents has {len(teacher_latents)} entries < warmup_k {warmup_k}"
            )
        if eps_seq is not None and len(eps_seq) != steps:
            raise ValueError(f"eps_seq has {len(eps_seq)} entries, need {steps}")

        if state is None:
            state = self.initial_state(
                z_0.batch_size, dtype=z_0.theme.dtype, device=z_0.theme.device
            )
        outputs: list[EngineStepOutput] = []
        current = z_0
        for t in range(steps):
            if t < warmup_k:
                z_in = teacher_latents[t] if teacher_latents is not None else z_0
            else:
                z_in = current
            eps = eps_seq[t] if eps_seq is not None else None
            state, out = self.step(state, z_in, actions[:, t], eps=eps, generator=generator)
            outputs.append(out)
            current = out.z_next
        return outputs, state
