"""LWS1 sequence container and dataset generation.

Layout (little-endian):
  magic "LWS1" | version u32 | n u32 | T u32 | H u32 | W u32 | C u32 | A u32
  n*T raw RGB frames (H*W*C bytes each, row-major, sequence-major)
  n*T*A float32 actions
  n u64 per-sequence frame-block offsets
  footer magic "1SWL"
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from latentdrive.toyworld.render import render_frame
from latentdrive.toyworld.world import (
    ActionVector,
    WorldConfig,
    generate_world,
    step_world,
)

MAGIC = b"LWS1"
FOOTER_MAGIC = b"1SWL"
VERSION = 1
HEADER_FMT = "<4s7I"
HEADER_SIZE = struct.calcsize(HEADER_FMT)


class DatasetFormatError(ValueError):
    """Base class for LWS1 parse failures."""


class BadMagicError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


def splitmix64(seed: int, index: int) -> int:
    """Derived per-sequence seed; standard splitmix64 finalizer."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return z


@dataclass(frozen=True)
class DataGenConfig:
    num_sequences: int = 2000
    timesteps: int = 16
    size: int = 64
    world: WorldConfig = field(default_factory=WorldConfig)
    # OU action policy: correlated controls so consecutive actions stay close
    ou_theta: float = 1.2
    ou_sigma_speed: float = 2.5
    ou_sigma_omega: float = 1.0
    speed_mean_frac: float = 0.55  # resting speed as a fraction of v_max


class OUPolicy:
    """Ornstein-Uhlenbeck-filtered random driving policy, clamped to bounds."""

    def __init__(self, config: DataGenConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.u_speed = 0.0
        self.u_omega = 0.0

    def sample(self, dt: float) -> ActionVector:
        cfg = self.config
        decay = math.exp(-cfg.ou_theta * dt)
        scale = math.sqrt(1.0 - decay * decay)
        self.u_speed = decay * self.u_speed + scale * cfg.ou_sigma_speed * self.rng.standard_normal()
        self.u_omega = decay * self.u_omega + scale * cfg.ou_sigma_omega * self.rng.standard_normal()
        w = cfg.world
        speed = float(np.clip(cfg.speed_mean_frac * w.v_max + self.u_speed, 0.0, w.v_max))
        omega = float(np.clip(self.u_omega, -w.omega_max, w.omega_max))
        return ActionVector(speed, omega)


def _generate_sequence(config: DataGenConfig, seq_seed: int) -> tuple[np.ndarray, np.ndarray]:
    T = config.timesteps
    rng = np.random.default_rng(seq_seed)
    state = generate_world(seq_seed, config.world)
    half = config.world.map_half_extent
    state = state.__class__(
        ego_x=float(rng.uniform(-0.55 * half, 0.55 * half)),
        ego_y=float(rng.uniform(-0.55 * half, 0.55 * half)),
        heading=state.heading,
        obstacles=state.obstacles,
        road_spline=state.road_spline,
        theme=state.theme,
        config=state.config,
    )
    policy = OUPolicy(config, rng)
    frames = np.empty((T, config.size, config.size, 3), dtype=np.uint8)
    actions = np.empty((T, 2), dtype=np.float32)
    dt = config.world.dt
    for t in range(T):
        frames[t] = render_frame(state, config.size)
        action = policy.sample(dt)
        actions[t] = action.as_array()
        state = step_world(state, action, dt)
    return frames, actions


def expected_file_size(n: int, T: int, H: int, W: int, C: int = 3, A: int = 2) -> int:
    return HEADER_SIZE + n * T * H * W * C + n * T * A * 4 + n * 8 + len(FOOTER_MAGIC)


def generate_dataset(config: DataGenConfig, seed: int, out_path: str | Path) -> Path:
    """Write an LWS1 file; byte-identical for identical (config, seed)."""
    if config.num_sequences <= 0:
        raise ValueError("num_sequences must be > 0")
    out_path = Path(out_path)
    n, T, size = config.num_sequences, config.timesteps, config.size
    frame_bytes = size * size * 3

    tmp_path = out_path.with_name(out_path.name + ".tmp")
    all_actions = np.empty((n, T, 2), dtype=np.float32)
    offsets = np.empty(n, dtype=np.uint64)
    with open(tmp_path, "wb") as fh:
        fh.write(struct.pack(HEADER_FMT, MAGIC, VERSION, n, T, size, size, 3, 2))
        for i in range(n):
            offsets[i] = HEADER_SIZE + i * T * frame_bytes
            frames, actions = _generate_sequence(config, splitmix64(seed, i))
            fh.write(frames.tobytes())
            all_actions[i] = actions
        fh.write(all_actions.astype("<f4").tobytes())
        fh.write(offsets.astype("<u8").tobytes())
        fh.write(FOOTER_MAGIC)
    tmp_path.replace(out_path)
    return out_path


def write_dataset(frames: np.ndarray, actions: np.ndarray, out_path: str | Path) -> Path:
    """Write pre-built (n, T, H, W, 3) frames and (n, T, 2) actions as LWS1."""
    n, T, H, W, C = frames.shape
    if C != 3 or frames.dtype != np.uint8:
        raise ValueError("frames must be uint8 RGB")
    if actions.shape != (n, T, 2):
        raise ValueError(f"actions must be ({n}, {T}, 2)")
    out_path = Path(out_path)
    frame_bytes = H * W * 3
    offsets = HEADER_SIZE + np.arange(n, dtype=np.uint64) * np.uint64(T * frame_bytes)
    tmp_path = out_path.with_name(out_path.name + ".tmp")
    with open(tmp_path, "wb") as fh:
        fh.write(struct.pack(HEADER_FMT, MAGIC, VERSION, n, T, H, W, 3, 2))
        fh.write(np.ascontiguousarray(frames).tobytes())
        fh.write(actions.astype("<f4").tobytes())
        fh.write(offsets.astype("<u8").tobytes())
        fh.write(FOOTER_MAGIC)
    tmp_path.replace(out_path)
    return out_path


class SequenceDataset:
    """Random-access LWS1 reader backed by a memory map."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        actual = self.path.stat().st_size
        if actual < HEADER_SIZE:
            raise TruncatedFileError(
                f"{self.path}: {HEADER_SIZE - actual} header bytes missing"
            )
        with open(self.path, "rb") as fh:
            header = fh.read(HEADER_SIZE)
        magic, version, n, T, H, W, C, A = struct.unpack(HEADER_FMT, header)
        if magic != MAGIC:
            raise BadMagicError(f"{self.path}: magic {magic!r} != {MAGIC!r}")
        if version != VERSION:
            raise VersionMismatchError(f"{self.path}: version {version} != {VERSION}")
        expected = expected_file_size(n, T, H, W, C, A)
        if actual != expected:
            raise TruncatedFileError(
                f"{self.path}: expected {expected} bytes, found {actual} "
                f"({expected - actual} missing)"
            )
        self.n, self.T, self.H, self.W, self.C, self.A = n, T, H, W, C, A
        frame_count = n * T
        self._frames = np.memmap(
            self.path,
            dtype=np.uint8,
            mode="r",
            offset=HEADER_SIZE,
            shape=(frame_count, H, W, C),
        )
        actions_off = HEADER_SIZE + frame_count * H * W * C
        self._actions = np.memmap(
            self.path, dtype="<f4", mode="r", offset=actions_off, shape=(n, T, A)
        )
        offsets_off = actions_off + frame_count * A * 4
        self._offsets = np.memmap(
            self.path, dtype="<u8", mode="r", offset=offsets_off, shape=(n,)
        )
        frame_bytes = T * H * W * C
        expected_offsets = HEADER_SIZE + np.arange(n, dtype=np.uint64) * np.uint64(frame_bytes)
        if not np.array_equal(np.asarray(self._offsets), expected_offsets):
            raise DatasetFormatError(f"{self.path}: offset table inconsistent")

    @property
    def metadata(self) -> tuple[int, int, int, int]:
        return (self.n, self.T, self.H, self.W)

    def frames(self, i: int) -> np.ndarray:
        if not (0 <= i < self.n):
            raise IndexError(f"sequence {i} out of range [0, {self.n})")
        return np.asarray(self._frames[i * self.T : (i + 1) * self.T])

    def actions(self, i: int) -> np.ndarray:
        if not (0 <= i < self.n):
            raise IndexError(f"sequence {i} out of range [0, {self.n})")
        return np.asarray(self._actions[i])

    def all_actions(self) -> np.ndarray:
        return np.asarray(self._actions)

    def frame(self, i: int, t: int) -> np.ndarray:
        if not (0 <= t < self.T):
            raise IndexError(f"timestep {t} out of range [0, {self.T})")
        return np.asarray(self._frames[i * self.T + t])

    def __len__(self) -> int:
        return self.n
