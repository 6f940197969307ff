"""Versioned binary checkpoint container.

Layout: 8-byte magic, u32 LE version, u32 LE JSON header length, the JSON
header (config, epoch, histories, parameter names/shapes), then raw
float64 little-endian parameter buffers in header order. load(save(x))
is bitwise exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict, config_to_dict
from .tensor import ParamStore

MAGIC = b"DHANCKPT"
VERSION = 1


class CheckpointError(RuntimeError):
    """Corrupt or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    config: RunConfig
    epoch: int
    metric_history: list[dict]
    loss_history: list[float]
    params: dict[str, np.ndarray]

    def restore_into(self, store: ParamStore) -> None:
        if set(store) != set(self.params):
            missing = set(store) ^ set(self.params)
            raise CheckpointError(f"parameter name mismatch: {sorted(missing)}")
        for name, t in store.items():
            arr = self.params[name]
            if arr.shape != t.data.shape:
                raise CheckpointError(
                    f"{name}: checkpoint shape {arr.shape} != model {t.data.shape}"
                )
            t.data = arr.copy()


def save_checkpoint(
    path,
    store: ParamStore,
    config: RunConfig,
    epoch: int,
    metric_history: list[dict],
    loss_history: list[float],
) -> None:
    """Atomic write (write-then-rename): no partial checkpoint files."""
    path = Path(path)
    names = list(store)
    header = {
        "config": config_to_dict(config),
        "epoch": epoch,
        "metric_history": metric_history,
        "loss_history": loss_history,
        "params": [{"name": n, "shape": list(store[n].data.shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(store[n].data, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointError(f"{path}: truncated parameter {spec['name']}")
            params[spec["name"]] = (
                np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            )
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes")
    return Checkpoint(
        config=config_from_dict(header["config"]),
        epoch=header["epoch"],
        metric_history=header["metric_history"],
        loss_history=header["loss_history"],
        params=params,
    )
