"""Checkpoint format.

A checkpoint is a directory holding

* ``index.json``: ``{"format", "metadata", "params": {name: {"shape", "offset"}}}``
* ``params.bin``: little-endian float32 arrays concatenated in index order.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .errors import CompatibilityError, DependencyError

FORMAT = "ildiff-ckpt-1"
INDEX = "index.json"
BLOB = "params.bin"


def _as_f32(t: torch.Tensor) -> np.ndarray:
    # ascontiguousarray would promote 0-d buffers to shape (1,)
    return np.require(t.detach().cpu().numpy().astype("<f4", copy=False), requirements="C")


def save_checkpoint(state: dict[str, torch.Tensor], path, metadata: dict) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = {}
    offset = 0
    with open(path / BLOB, "wb") as fh:
        for name, tensor in state.items():
            arr = _as_f32(tensor)
            fh.write(arr.tobytes())
            params[name] = {"shape": list(arr.shape), "offset": offset}
            offset += arr.nbytes
    index = {"format": FORMAT, "metadata": metadata, "params": params}
    with open(path / INDEX, "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=1, sort_keys=False)
    return path


def read_index(path) -> dict:
    path = Path(path)
    if not (path / INDEX).is_file() or not (path / BLOB).is_file():
        raise DependencyError(f"no checkpoint at {path}")
    with open(path / INDEX, encoding="utf-8") as fh:
        index = json.load(fh)
    if index.get("format") != FORMAT:
        raise CompatibilityError(f"{path}: unknown checkpoint format {index.get('format')!r}")
    return index


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    path = Path(path)
    index = read_index(path)
    blob = (path / BLOB).read_bytes()
    expected = 4 * sum(int(np.prod(p["shape"])) for p in index["params"].values())
    if len(blob) != expected:
        raise CompatibilityError(f"{path}: blob has {len(blob)} bytes, index expects {expected}")
    state = {}
    for name, p in index["params"].items():
        count = int(np.prod(p["shape"]))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=p["offset"])
        state[name] = torch.from_numpy(arr.reshape(p["shape"]).astype(np.float32))
    return state, index["metadata"]


def hash_tensors(items) -> str:
    """sha256 over (name, shape, float32 bytes) of ``(name, tensor)`` pairs."""
    h = hashlib.sha256()
    for name, t in items:
        arr = _as_f32(t)
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
