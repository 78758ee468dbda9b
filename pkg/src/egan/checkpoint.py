"""Checkpoint archives: JSON manifest plus one parameter blob per network.

Blobs are a flat little-endian container (name, shape header, float32 data per
entry) so files are portable and byte-stable: saving the same state twice
produces identical bytes, which the resume and determinism contracts rely on.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

from .dataset import AttributeSchema
from .models import ADAM_BETAS, NETWORK_NAMES, ModelState, NetworkConfig, init_params

FORMAT_VERSION = 1
_MAGIC = b"EGANPB01"
LATEST_NAME = "latest.json"


class CheckpointError(RuntimeError):
    pass


def _write_blob(path: Path, arrays: Mapping[str, np.ndarray]) -> bytes:
    chunks = [_MAGIC, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.tobytes())
    data = b"".join(chunks)
    path.write_bytes(data)
    return data


def _read_blob(path: Path) -> dict[str, np.ndarray]:
    data = path.read_bytes()
    if data[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: not a parameter blob")
    offset = len(_MAGIC)
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset) if ndim else ()
        offset += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arrays[name] = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape).copy()
        offset += 4 * size
    return arrays


def _network_arrays(state: ModelState, name: str) -> dict[str, np.ndarray]:
    net = state.networks()[name]
    opt = state.optimizers[name]
    arrays: dict[str, np.ndarray] = {}
    for pname, param in net.named_parameters():
        arrays[f"param.{pname}"] = param.detach().numpy()
        opt_state = opt.state.get(param, {})
        if opt_state:
            arrays[f"adam.exp_avg.{pname}"] = opt_state["exp_avg"].numpy()
            arrays[f"adam.exp_avg_sq.{pname}"] = opt_state["exp_avg_sq"].numpy()
            arrays[f"adam.step.{pname}"] = np.asarray(float(opt_state["step"]), dtype=np.float32)
    return arrays


def checkpoint_id(directory: Path | str) -> str:
    """Stable content hash over the parameter blobs."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for name in NETWORK_NAMES:
        digest.update((directory / f"{name}.blob").read_bytes())
    return digest.hexdigest()[:16]


def save_checkpoint(
    directory: Path | str,
    state: ModelState,
    schema: AttributeSchema,
    metrics: Mapping[str, float] | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in NETWORK_NAMES:
        _write_blob(directory / f"{name}.blob", _network_arrays(state, name))
    manifest = {
        "format_version": FORMAT_VERSION,
        "network_config": {
            "n_attributes": state.config.n_attributes,
            "latent_dim": state.config.latent_dim,
            "resolution": state.config.resolution,
            "base_channels": state.config.base_channels,
            "feature_dim_d": state.config.feature_dim_d,
            "feature_dim_c": state.config.feature_dim_c,
            "connection_hidden": list(state.config.connection_hidden),
        },
        "attribute_names": list(schema.names),
        "step": state.step,
        "rng_state": state.rng.bit_generator.state,
        "learning_rates": {name: state.optimizers[name].param_groups[0]["lr"] for name in NETWORK_NAMES},
        "adam_betas": list(ADAM_BETAS),
        "metrics": dict(metrics) if metrics else {},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


@dataclass
class Checkpoint:
    state: ModelState
    schema: AttributeSchema
    manifest: dict
    checkpoint_id: str
    path: Path


def load_checkpoint(directory: Path | str) -> Checkpoint:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"no manifest.json under {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')}")
    cfg = manifest["network_config"]
    config = NetworkConfig(
        n_attributes=cfg["n_attributes"],
        latent_dim=cfg["latent_dim"],
        resolution=cfg["resolution"],
        base_channels=cfg["base_channels"],
        feature_dim_d=cfg["feature_dim_d"],
        feature_dim_c=cfg["feature_dim_c"],
        connection_hidden=tuple(cfg["connection_hidden"]),
    )
    state = init_params(config, seed=0)
    state.step = manifest["step"]
    state.rng = np.random.default_rng()
    state.rng.bit_generator.state = manifest["rng_state"]

    for name in NETWORK_NAMES:
        arrays = _read_blob(directory / f"{name}.blob")
        net = state.networks()[name]
        opt = state.optimizers[name]
        opt.param_groups[0]["lr"] = manifest["learning_rates"][name]
        for pname, param in net.named_parameters():
            key = f"param.{pname}"
            if key not in arrays:
                raise CheckpointError(f"{name}: missing tensor {pname}")
            if tuple(arrays[key].shape) != tuple(param.shape):
                raise CheckpointError(f"{name}.{pname}: shape {arrays[key].shape} != {tuple(param.shape)}")
            with torch.no_grad():
                param.copy_(torch.from_numpy(arrays[key]))
            if f"adam.exp_avg.{pname}" in arrays:
                opt.state[param] = {
                    "step": torch.tensor(float(arrays[f"adam.step.{pname}"].reshape(()))),
                    "exp_avg": torch.from_numpy(arrays[f"adam.exp_avg.{pname}"]),
                    "exp_avg_sq": torch.from_numpy(arrays[f"adam.exp_avg_sq.{pname}"]),
                }
    schema = AttributeSchema(tuple(manifest["attribute_names"]))
    return Checkpoint(
        state=state,
        schema=schema,
        manifest=manifest,
        checkpoint_id=checkpoint_id(directory),
        path=directory,
    )


def write_numbered_checkpoint(
    run_dir: Path | str,
    state: ModelState,
    schema: AttributeSchema,
    metrics: Mapping[str, float] | None = None,
) -> Path:
    """Save under checkpoints/step_NNNNNN and repoint the latest marker."""
    run_dir = Path(run_dir)
    ckpt_root = run_dir / "checkpoints"
    target = ckpt_root / f"step_{state.step:06d}"
    save_checkpoint(target, state, schema, metrics)
    (ckpt_root / LATEST_NAME).write_text(
        json.dumps({"step": state.step, "path": target.name}, sort_keys=True) + "\n"
    )
    return target


def resolve_latest(run_or_ckpt: Path | str) -> Path:
    """Accept a checkpoint dir, a run dir, or a checkpoints/ dir and find the archive."""
    path = Path(run_or_ckpt)
    if (path / "manifest.json").exists():
        return path
    for root in (path / "checkpoints", path):
        marker = root / LATEST_NAME
        if marker.exists():
            return root / json.loads(marker.read_text())["path"]
    raise CheckpointError(f"no checkpoint found under {path}")
