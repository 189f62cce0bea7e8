"""Versioned checkpoint container.

One file holds a JSON header (kind, config echo, metadata, RNG states) plus
raw parameter blobs keyed by layer path. Writes are atomic (temp + rename)
and byte-deterministic: blobs are sorted by key and the header is serialized
with sorted keys, so save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

MAGIC = b"LDCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    meta: dict
    arrays: dict[str, np.ndarray]

    def module_state(self, prefix: str) -> dict[str, torch.Tensor]:
        out = {}
        skip = len(prefix) + 1
        for key, arr in self.arrays.items():
            if key.startswith(prefix + "."):
                out[key[skip:]] = torch.from_numpy(arr.copy())
        return out


def encode_container(
    kind: str, config: dict, arrays: dict[str, np.ndarray], meta: dict | None = None
) -> bytes:
    blobs = []
    payload = bytearray()
    for key in sorted(arrays):
        arr = np.asarray(arrays[key])
        if arr.ndim > 0:
            arr = np.ascontiguousarray(arr)  # keeps 0-d arrays 0-d
        blobs.append(
            {
                "key": key,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "nbytes": arr.nbytes,
            }
        )
        payload.extend(arr.tobytes())
    header = {
        "version": VERSION,
        "kind": kind,
        "config": config,
        "meta": meta or {},
        "blobs": blobs,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header_bytes)) + header_bytes + bytes(payload)


def decode_container(data: bytes, source: str = "blob") -> Checkpoint:
    if data[:4] != MAGIC:
        raise CheckpointError(f"{source}: bad magic {data[:4]!r}")
    version, header_len = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported version {version}")
    header = json.loads(data[16 : 16 + header_len])
    offset = 16 + header_len
    arrays = {}
    for blob in header["blobs"]:
        raw = data[offset : offset + blob["nbytes"]]
        if len(raw) != blob["nbytes"]:
            raise CheckpointError(
                f"{source}: blob {blob['key']!r} truncated "
                f"({blob['nbytes'] - len(raw)} bytes missing)"
            )
        arrays[blob["key"]] = np.frombuffer(raw, dtype=np.dtype(blob["dtype"])).reshape(
            blob["shape"]
        ).copy()
        offset += blob["nbytes"]
    return Checkpoint(
        kind=header["kind"], config=header["config"], meta=header["meta"], arrays=arrays
    )


def save_checkpoint(
    path: str | Path,
    kind: str,
    config: dict,
    arrays: dict[str, np.ndarray],
    meta: dict | None = None,
) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_container(kind, config, arrays, meta))
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    return decode_container(path.read_bytes(), source=str(path))


def module_arrays(prefix: str, module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.{key}": value.detach().cpu().numpy()
        for key, value in module.state_dict().items()
    }


def load_module(module: torch.nn.Module, checkpoint: Checkpoint, prefix: str) -> None:
    state = checkpoint.module_state(prefix)
    if not state:
        raise CheckpointError(f"no arrays under prefix {prefix!r}")
    module.load_state_dict(state)


def optimizer_arrays(prefix: str, optimizer: torch.optim.Optimizer) -> tuple[dict, list]:
    """Flatten optimizer tensors into arrays; param_groups go to the header."""
    arrays = {}
    state = optimizer.state_dict()
    for idx, entry in state["state"].items():
        for key, value in entry.items():
            if isinstance(value, torch.Tensor):
                arrays[f"{prefix}.state.{idx}.{key}"] = value.detach().cpu().numpy()
            else:
                arrays[f"{prefix}.state.{idx}.{key}"] = np.asarray(value)
    return arrays, state["param_groups"]


def load_optimizer(
    optimizer: torch.optim.Optimizer,
    checkpoint: Checkpoint,
    prefix: str,
    param_groups: list,
) -> None:
    state: dict = {}
    skip = len(prefix) + 7  # strip "<prefix>.state."
    for key, arr in checkpoint.arrays.items():
        if not key.startswith(prefix + ".state."):
            continue
        idx_str, field = key[skip:].split(".", 1)
        entry = state.setdefault(int(idx_str), {})
        tensor = torch.from_numpy(arr.copy())
        entry[field] = tensor
    optimizer.load_state_dict({"state": state, "param_groups": param_groups})


def rng_arrays(generators: dict[str, torch.Generator]) -> dict[str, np.ndarray]:
    return {
        f"rng.{name}": gen.get_state().numpy() for name, gen in generators.items()
    }


def load_rng(checkpoint: Checkpoint, generators: dict[str, torch.Generator]) -> None:
    for name, gen in generators.items():
        arr = checkpoint.arrays.get(f"rng.{name}")
        if arr is None:
            raise CheckpointError(f"missing RNG state rng.{name}")
        gen.set_state(torch.from_numpy(arr.copy()))


def numpy_rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_numpy_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng
