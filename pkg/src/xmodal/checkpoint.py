"""Versioned single-file checkpoint container.

Layout: a magic line, the manifest byte length, a JSON manifest (format
version, full training config, config hash, epoch/step counters, optimizer
step counts, RNG states, and a tensor index of name/dtype/shape/offset),
followed by the raw little-endian tensor payloads. Network parameters and
optimizer moments are float32; dictionary atoms are stored float64 so their
unit-norm invariant survives the round trip, and batch-norm batch counters
are int64. Loading reproduces the next training step bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict

import numpy as np
import torch

MAGIC = "XMODCKPT"
FORMAT_VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


def config_to_dict(config) -> dict:
    return asdict(config)


def config_from_dict(data: dict):
    from .conditioning import ConditioningSpec
    from .dictionary import DiLConfig
    from .training import TrainConfig

    data = dict(data)
    cond = ConditioningSpec(**data.pop("conditioning"))
    dil = DiLConfig(**data.pop("dil"))
    return TrainConfig(conditioning=cond, dil=dil, **data)


def config_hash(config) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _named_tensors(state) -> dict:
    """Every array that must survive a round trip, keyed by a stable name."""
    out = {}
    nets = {"g_fwd": state.g_fwd, "g_back": state.g_back,
            "d_fwd": state.d_fwd, "d_back": state.d_back}
    for prefix, net in nets.items():
        for name, p in net.named_parameters():
            out[f"{prefix}.{name}"] = p.detach().numpy()
        for name, b in net.named_buffers():
            out[f"{prefix}.{name}"] = b.detach().numpy()
    for opt_name, opt in (("opt_g", state.opt_g), ("opt_d_fwd", state.opt_d_fwd),
                          ("opt_d_back", state.opt_d_back)):
        for pname, t in opt.m.items():
            out[f"{opt_name}.m.{pname}"] = t.numpy()
        for pname, t in opt.v.items():
            out[f"{opt_name}.v.{pname}"] = t.numpy()
    if state.dict_fwd is not None:
        out["dict_fwd.atoms"] = state.dict_fwd.atoms
        out["dict_back.atoms"] = state.dict_back.atoms
    return out


def _dtype_tag(arr: np.ndarray) -> str:
    kind = arr.dtype
    if kind == np.float32:
        return "<f4"
    if kind == np.float64:
        return "<f8"
    if kind == np.int64:
        return "<i8"
    raise CheckpointError(f"unsupported tensor dtype {kind}")


def save_checkpoint(path: str, state) -> None:
    """Serialize the whole training state to one file (atomic rename)."""
    tensors = _named_tensors(state)
    index = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        tag = _dtype_tag(arr)
        payload = arr.astype(_DTYPES[tag], copy=False).tobytes()
        index.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(payload)})
        blobs.append(payload)
        offset += len(payload)
    manifest = {
        "magic": MAGIC,
        "version": FORMAT_VERSION,
        "config": config_to_dict(state.config),
        "config_hash": config_hash(state.config),
        "epoch": state.epoch,
        "step": state.step,
        "opt_steps": {"g": state.opt_g.t, "d_fwd": state.opt_d_fwd.t,
                      "d_back": state.opt_d_back.t},
        "rng": {
            "torch": torch.get_rng_state().numpy().tobytes().hex(),
            "numpy": state.data_rng.bit_generator.state,
        },
        "tensors": index,
    }
    manifest_bytes = json.dumps(manifest).encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"{MAGIC} {FORMAT_VERSION}\n".encode())
        fh.write(f"{len(manifest_bytes)}\n".encode())
        fh.write(manifest_bytes)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def read_manifest(path: str) -> dict:
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        if not header.startswith(MAGIC):
            raise CheckpointError(f"{path} is not a checkpoint file")
        version = int(header.split()[1])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        length = int(fh.readline().decode().strip())
        return json.loads(fh.read(length).decode())


def _read_payloads(path: str, manifest: dict) -> dict:
    with open(path, "rb") as fh:
        fh.readline()
        length = int(fh.readline().decode().strip())
        fh.seek(length, os.SEEK_CUR)
        base = fh.tell()
        out = {}
        for entry in manifest["tensors"]:
            fh.seek(base + entry["offset"])
            raw = fh.read(entry["nbytes"])
            arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]])
            out[entry["name"]] = arr.reshape(entry["shape"]).copy()
        return out


def load_checkpoint(path: str):
    """Rebuild a TrainState that continues training bit-exactly."""
    from .dictionary import Dictionary
    from .training import init_train_state

    manifest = read_manifest(path)
    tensors = _read_payloads(path, manifest)
    config = config_from_dict(manifest["config"])
    state = init_train_state(config)

    nets = {"g_fwd": state.g_fwd, "g_back": state.g_back,
            "d_fwd": state.d_fwd, "d_back": state.d_back}
    with torch.no_grad():
        for prefix, net in nets.items():
            for name, p in net.named_parameters():
                arr = tensors[f"{prefix}.{name}"]
                p.copy_(torch.from_numpy(arr.astype(np.float32, copy=False)))
            for name, b in net.named_buffers():
                arr = tensors[f"{prefix}.{name}"]
                b.copy_(torch.from_numpy(arr.astype(
                    np.int64 if b.dtype == torch.int64 else np.float32, copy=False)))
        for opt_name, opt in (("opt_g", state.opt_g), ("opt_d_fwd", state.opt_d_fwd),
                              ("opt_d_back", state.opt_d_back)):
            opt.t = int(manifest["opt_steps"][opt_name.replace("opt_", "")])
            for pname in opt.params:
                opt.m[pname].copy_(torch.from_numpy(
                    tensors[f"{opt_name}.m.{pname}"].astype(np.float32, copy=False)))
                opt.v[pname].copy_(torch.from_numpy(
                    tensors[f"{opt_name}.v.{pname}"].astype(np.float32, copy=False)))
    if "dict_fwd.atoms" in tensors:
        state.dict_fwd = Dictionary(tensors["dict_fwd.atoms"])
        state.dict_back = Dictionary(tensors["dict_back.atoms"])
    rng_state = manifest["rng"]
    torch.set_rng_state(torch.tensor(
        np.frombuffer(bytes.fromhex(rng_state["torch"]), dtype=np.uint8)))
    state.data_rng = np.random.default_rng()
    state.data_rng.bit_generator.state = rng_state["numpy"]
    state.epoch = int(manifest["epoch"])
    state.step = int(manifest["step"])
    state.last_checkpoint = path
    return state
