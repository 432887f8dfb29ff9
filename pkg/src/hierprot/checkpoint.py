"""Versioned checkpoint container for named parameter tensors.

Backed by ``numpy.savez`` (lossless float64 round-trip) with a JSON metadata
sidecar entry.  Shared by encoder checkpoints and model checkpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    payload = {_META_KEY: np.frombuffer(
        json.dumps({"checkpoint_version": CHECKPOINT_VERSION,
                    "meta": meta or {}}).encode(), dtype=np.uint8)}
    for name, arr in arrays.items():
        if name == _META_KEY:
            raise ValueError(f"{_META_KEY!r} is reserved")
        payload[name] = np.asarray(arr)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data[_META_KEY]).decode())
        if header.get("checkpoint_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint_version {header.get('checkpoint_version')!r}")
        arrays = {k: data[k].copy() for k in data.files if k != _META_KEY}
    return arrays, header["meta"]
