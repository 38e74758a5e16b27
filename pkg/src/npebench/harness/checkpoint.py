"""Checkpoint persistence: a JSON manifest plus one float32 binary blob.

The manifest lists every tensor (name, shape) in a fixed order together
with the run-config snapshot, step counter and RNG states; the blob is the
concatenated little-endian row-major float32 payload.  Loading is
bit-exact and refuses payloads that disagree with the manifest.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch

from ..errors import CorruptCheckpoint, ShapeError

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
FORMAT_VERSION = 1


def rng_state_to_json(np_state: Dict[str, Any] | None,
                      torch_state: torch.Tensor | None) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    if np_state is not None:
        out["numpy"] = json.loads(json.dumps(np_state, default=int))
    if torch_state is not None:
        out["torch"] = base64.b64encode(torch_state.numpy().tobytes()).decode("ascii")
    return out


def torch_state_from_json(state: Dict[str, Any]) -> torch.Tensor | None:
    if "torch" not in state:
        return None
    raw = base64.b64decode(state["torch"])
    return torch.from_numpy(np.frombuffer(raw, dtype=np.uint8).copy())


def save_checkpoint(model: torch.nn.Module, path, run_config: Dict[str, Any],
                    step: int = 0, rng_state: Dict[str, Any] | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = []
    chunks = []
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": "f32"})
        chunks.append(arr.astype("<f4").tobytes(order="C"))
    manifest = {
        "format": FORMAT_VERSION,
        "tensors": tensors,
        "run_config": run_config,
        "step": int(step),
        "rng": rng_state or {},
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    (path / WEIGHTS_NAME).write_bytes(b"".join(chunks))


def read_manifest(path) -> Dict[str, Any]:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.exists():
        raise CorruptCheckpoint(f"missing {manifest_path}")
    try:
        return json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unreadable manifest: {exc}") from exc


def load_weights(model: torch.nn.Module, path) -> Dict[str, Any]:
    """Load blob tensors into ``model`` in manifest order; returns the manifest.

    The model is only mutated after the whole payload validates.
    """
    path = Path(path)
    manifest = read_manifest(path)
    blob = (path / WEIGHTS_NAME).read_bytes()
    expected = sum(int(np.prod(t["shape"])) * 4 for t in manifest["tensors"])
    if len(blob) != expected:
        raise CorruptCheckpoint(
            f"blob holds {len(blob)} bytes, manifest declares {expected}")
    state = model.state_dict()
    new_state = {}
    offset = 0
    for entry in manifest["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype="<f4").reshape(shape)
        offset += nbytes
        if name not in state:
            raise ShapeError(f"checkpoint tensor {name!r} not present in model")
        if tuple(state[name].shape) != shape:
            raise ShapeError(
                f"tensor {name!r}: checkpoint shape {shape} vs model "
                f"{tuple(state[name].shape)}")
        new_state[name] = torch.from_numpy(arr.copy()).to(state[name].dtype)
    missing = set(state) - set(new_state)
    if missing:
        raise ShapeError(f"checkpoint lacks tensors {sorted(missing)}")
    model.load_state_dict(new_state)
    return manifest
