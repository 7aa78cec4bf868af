"""Checkpoint files: a text manifest followed by raw little-endian float32 arrays.

Layout::

    neurodenoise-checkpoint 1
    config_hash <sha256>
    config <one-line JSON model config>
    param <name> <dim0>x<dim1>...
    ...
    end
    <float32 LE data for each param, in manifest order>
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .model import SpikingFullSubNet

MAGIC = "neurodenoise-checkpoint"
VERSION = 1
_LE_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    """Malformed file or a config/shape mismatch."""


def _shape_str(shape) -> str:
    return "x".join(str(s) for s in shape) if len(shape) else "scalar"


def _parse_shape(s: str) -> tuple:
    return () if s == "scalar" else tuple(int(v) for v in s.split("x"))


def save_checkpoint(model: SpikingFullSubNet, path: str | Path) -> Path:
    path = Path(path)
    cfg = model.cfg
    lines = [f"{MAGIC} {VERSION}", f"config_hash {cfg.config_hash()}",
             "config " + json.dumps(cfg.to_dict(), sort_keys=True)]
    arrays = []
    for name, p in model.named_parameters():
        arr = p.detach().cpu().numpy().astype(_LE_F32)
        lines.append(f"param {name} {_shape_str(arr.shape)}")
        arrays.append(arr)
    lines.append("end")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())
    return path


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (header, name -> float32 array) without building a model."""
    raw = Path(path).read_bytes()
    header: dict = {"params": []}
    pos = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError("truncated header")
        line = raw[pos:nl].decode("utf-8", errors="replace")
        pos = nl + 1
        if not header.get("version"):
            parts = line.split()
            if len(parts) != 2 or parts[0] != MAGIC:
                raise CheckpointError("not a neurodenoise checkpoint")
            header["version"] = int(parts[1])
            if header["version"] != VERSION:
                raise CheckpointError(f"unsupported checkpoint version {parts[1]}")
            continue
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        if key == "config_hash":
            header["config_hash"] = rest.strip()
        elif key == "config":
            header["config"] = json.loads(rest)
        elif key == "param":
            name, shape = rest.split()
            header["params"].append((name, _parse_shape(shape)))
        else:
            raise CheckpointError(f"unknown header line {key!r}")
    arrays = {}
    for name, shape in header["params"]:
        n = int(np.prod(shape, dtype=np.int64))
        end = pos + n * _LE_F32.itemsize
        if end > len(raw):
            raise CheckpointError(f"data for {name} is truncated")
        arrays[name] = np.frombuffer(raw[pos:end], dtype=_LE_F32).reshape(shape).copy()
        pos = end
    if pos != len(raw):
        raise CheckpointError(f"{len(raw) - pos} trailing bytes after declared arrays")
    return header, arrays


def load_checkpoint(path: str | Path, cfg: ModelConfig | None = None) -> SpikingFullSubNet:
    """Build a model from ``path``; with ``cfg`` given, its hash must match the file's."""
    header, arrays = read_checkpoint(path)
    stored = ModelConfig.from_dict(header["config"])
    if stored.config_hash() != header.get("config_hash"):
        raise CheckpointError("embedded config does not match its recorded hash")
    if cfg is not None and cfg.config_hash() != header["config_hash"]:
        raise CheckpointError(
            f"config hash {cfg.config_hash()[:12]} does not match checkpoint "
            f"{header['config_hash'][:12]}")
    model = SpikingFullSubNet(stored)
    params = dict(model.named_parameters())
    if set(params) != set(arrays):
        raise CheckpointError("parameter names differ from the model built by the config")
    with torch.no_grad():
        for name, arr in arrays.items():
            if tuple(params[name].shape) != arr.shape:
                raise CheckpointError(f"{name}: shape {arr.shape} != {tuple(params[name].shape)}")
            params[name].copy_(torch.from_numpy(arr))
    return model


def identity_model(cfg: ModelConfig) -> SpikingFullSubNet:
    """Debug model whose sub-band readouts emit the tap 1+0j on the current frame only."""
    model = SpikingFullSubNet(cfg)
    model.init_passthrough(weight_scale=0.0, decay=0.0)
    return model


def silent_model(cfg: ModelConfig) -> SpikingFullSubNet:
    """Debug model whose every tap, the DC pass-through included, is zero."""
    model = identity_model(cfg)
    with torch.no_grad():
        for net in model.subband:
            net.readout.b.zero_()
        model.dc_tap.zero_()
    return model
