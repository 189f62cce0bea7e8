"""Per-session simulation state over shared read-only model weights."""

from __future__ import annotations

import hashlib
import io
import json
import secrets
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from latentdrive.core import LatentCode
from latentdrive.engine import DynamicsEngine, EpsTriple
from latentdrive.toyworld.world import WorldConfig
from latentdrive.trainer import checkpoint as ckpt
from latentdrive.trainer.data import frames_to_tensor, tensor_to_frames
from latentdrive.trainer.dynamics import load_dynamics
from latentdrive.trainer.pretrain import load_pretrained

SNAPSHOT_VERSION = 1


class SessionError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


@dataclass
class ModelBundle:
    """Codec + engine pair shared read-only across sessions."""

    codec: object
    engine: DynamicsEngine
    v_max: float
    omega_max: float
    fingerprint: str
    path_key: str

    @classmethod
    def load(
        cls,
        codec_path: str | Path,
        engine_path: str | Path,
        v_max: float | None = None,
        omega_max: float | None = None,
    ) -> "ModelBundle":
        codec, _, codec_cfg = load_pretrained(codec_path)
        engine, engine_cfg = load_dynamics(engine_path)
        if not engine.config.matches_codec(
            codec_cfg.theme_dim, codec_cfg.content_grid, codec_cfg.content_dim
        ):
            raise SessionError("config_mismatch", "codec and engine latent dims differ")
        world = WorldConfig()
        fingerprint = hashlib.sha256(
            json.dumps(
                [codec_cfg.to_flat(), engine_cfg.to_flat()], sort_keys=True
            ).encode()
        ).hexdigest()[:16]
        return cls(
            codec=codec,
            engine=engine,
            v_max=v_max if v_max is not None else world.v_max,
            omega_max=omega_max if omega_max is not None else world.omega_max,
            fingerprint=fingerprint,
            path_key=f"{codec_path}::{engine_path}",
        )


def png_bytes(frame: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"))


class SimSession:
    """One drivable world instance; all mutations are externally serialized."""

    def __init__(
        self,
        bundle: ModelBundle,
        seed: int,
        eps_policy: str = "stochastic",
        init: str = "sample",
        init_frame: np.ndarray | None = None,
    ):
        if eps_policy not in ("stochastic", "frozen"):
            raise SessionError("bad_eps_policy", f"unknown eps policy {eps_policy!r}")
        self.bundle = bundle
        self.session_id = secrets.token_hex(8)
        self.seed = seed
        self.eps_policy = eps_policy
        self.init_mode = init
        self._init_frame = init_frame
        self.rng = torch.Generator()
        self.step_count = 0
        self.aindep_override: torch.Tensor | None = None
        self.last_adep: torch.Tensor | None = None
        self._initialize()

    def _initialize(self) -> None:
        self.rng.manual_seed(self.seed)
        self.step_count = 0
        self.aindep_override = None
        self.last_adep = None
        codec = self.bundle.codec
        if self.init_mode == "sample":
            self.z = codec.sample_prior(1, generator=self.rng)
        elif self.init_mode == "from_frame":
            if self._init_frame is None:
                raise SessionError("bad_init", "from_frame init requires an image")
            size = codec.config.image_size
            if self._init_frame.shape != (size, size, 3):
                raise SessionError(
                    "bad_init",
                    f"init frame must be {size}x{size}x3, got {self._init_frame.shape}",
                )
            with torch.no_grad():
                self.z = codec.encode_mean(frames_to_tensor(self._init_frame[None]))
        else:
            raise SessionError("bad_init", f"unknown init mode {self.init_mode!r}")
        self.engine_state = self.bundle.engine.initial_state(1)

    def reset(self) -> np.ndarray:
        self._initialize()
        return self.current_frame()

    def current_frame(self) -> np.ndarray:
        with torch.no_grad():
            return tensor_to_frames(self.bundle.codec.decode(self.z))[0]

    def _draw_eps(self) -> EpsTriple:
        cfg = self.bundle.engine.config
        if self.eps_policy == "frozen":
            return EpsTriple.zeros(cfg, 1)
        return EpsTriple.draw(cfg, 1, generator=self.rng)

    def step(self, speed: float, angular_velocity: float) -> np.ndarray:
        if not (0.0 <= speed <= self.bundle.v_max):
            raise SessionError(
                "action_bounds", f"speed {speed} outside [0, {self.bundle.v_max}]"
            )
        if abs(angular_velocity) > self.bundle.omega_max:
            raise SessionError(
                "action_bounds",
                f"angular velocity {angular_velocity} outside "
                f"[-{self.bundle.omega_max}, {self.bundle.omega_max}]",
            )
        action = torch.tensor([[speed, angular_velocity]], dtype=torch.float32)
        with torch.no_grad():
            self.engine_state, out = self.bundle.engine.step(
                self.engine_state,
                self.z,
                action,
                eps=self._draw_eps(),
                aindep_override=self.aindep_override,
            )
        self.z = out.z_next
        self.last_adep = out.z_adep
        self.step_count += 1
        return self.current_frame()

    def edit(self, kind: str, cell: tuple[int, int] | None = None) -> np.ndarray:
        codec = self.bundle.codec
        engine = self.bundle.engine
        if kind == "theme":
            self.z = codec.sample_theme(self.z, generator=self.rng)
        elif kind == "content":
            if cell is None:
                raise SessionError("bad_edit", "content edit requires a cell")
            n = codec.config.grid_size
            i, j = cell
            if not (0 <= i < n and 0 <= j < n):
                raise SessionError("bad_edit", f"cell {cell} outside {n}x{n} grid")
            self.z = codec.sample_content_cell(self.z, (i, j), generator=self.rng)
        elif kind == "aindep":
            self.aindep_override = torch.randn(
                1, engine.config.aindep_dim, generator=self.rng
            )
            if self.last_adep is not None:
                with torch.no_grad():
                    content = engine.fusion(self.last_adep, self.aindep_override)
                self.z = LatentCode(theme=self.z.theme, content=content)
        else:
            raise SessionError("bad_edit", f"unknown edit kind {kind!r}")
        return self.current_frame()

    def snapshot(self) -> bytes:
        arrays = {
            "z.theme": self.z.theme.numpy(),
            "z.content": self.z.content.numpy(),
            "state.h_conv": self.engine_state.h_conv.numpy(),
            "state.c_conv": self.engine_state.c_conv.numpy(),
            "state.h_lin": self.engine_state.h_lin.numpy(),
            "state.c_lin": self.engine_state.c_lin.numpy(),
            "rng": self.rng.get_state().numpy(),
        }
        if self.aindep_override is not None:
            arrays["aindep_override"] = self.aindep_override.numpy()
        if self.last_adep is not None:
            arrays["last_adep"] = self.last_adep.numpy()
        meta = {
            "snapshot_version": SNAPSHOT_VERSION,
            "fingerprint": self.bundle.fingerprint,
            "step_count": self.step_count,
            "eps_policy": self.eps_policy,
            "seed": self.seed,
            "init_mode": self.init_mode,
        }
        return ckpt.encode_container("session", {}, arrays, meta)

    def restore(self, blob: bytes) -> np.ndarray:
        try:
            saved = ckpt.decode_container(blob, source="snapshot")
        except ckpt.CheckpointError as exc:
            raise SessionError("bad_snapshot", str(exc)) from exc
        if saved.kind != "session":
            raise SessionError("bad_snapshot", f"not a session snapshot: {saved.kind}")
        if saved.meta.get("snapshot_version") != SNAPSHOT_VERSION:
            raise SessionError(
                "version_mismatch",
                f"snapshot version {saved.meta.get('snapshot_version')} != {SNAPSHOT_VERSION}",
            )
        if saved.meta.get("fingerprint") != self.bundle.fingerprint:
            raise SessionError("version_mismatch", "snapshot belongs to a different model")
        from latentdrive.engine import EngineState

        self.z = LatentCode(
            theme=torch.from_numpy(saved.arrays["z.theme"].copy()),
            content=torch.from_numpy(saved.arrays["z.content"].copy()),
        )
        self.engine_state = EngineState(
            h_conv=torch.from_numpy(saved.arrays["state.h_conv"].copy()),
            c_conv=torch.from_numpy(saved.arrays["state.c_conv"].copy()),
            h_lin=torch.from_numpy(saved.arrays["state.h_lin"].copy()),
            c_lin=torch.from_numpy(saved.arrays["state.c_lin"].copy()),
        )
        self.rng.set_state(torch.from_numpy(saved.arrays["rng"].copy()))
        self.aindep_override = (
            torch.from_numpy(saved.arrays["aindep_override"].copy())
            if "aindep_override" in saved.arrays
            else None
        )
        self.last_adep = (
            torch.from_numpy(saved.arrays["last_adep"].copy())
            if "last_adep" in saved.arrays
            else None
        )
        self.step_count = saved.meta["step_count"]
        self.eps_policy = saved.meta["eps_policy"]
        return self.current_frame()
