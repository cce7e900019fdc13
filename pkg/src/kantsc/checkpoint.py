"""Binary checkpoints: magic, JSON manifest, little-endian float64 blob.

Layout::

    b"KANTSC01" | uint64 LE manifest length | manifest (UTF-8 JSON) | blob

The manifest lists every tensor with its name, kind (param or buffer),
shape and byte offset into the blob.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import CheckpointError
from .models import Model, ModelConfig, build_model

MAGIC = b"KANTSC01"
DTYPE_TAG = "f64le"


def save_checkpoint(path, model: Model, extra: dict | None = None) -> None:
    if model.config is None:
        raise CheckpointError("only models built from a ModelConfig can be checkpointed")
    tensors, chunks, offset = [], [], 0
    items = [("param", p.name, p.value) for p in model.params()]
    items += [("buffer", name, v) for name, v in model.buffers().items()]
    for kind, name, value in items:
        raw = np.ascontiguousarray(value, dtype="<f8").tobytes()
        tensors.append({"name": name, "kind": kind, "shape": list(value.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": MAGIC.decode(), "dtype": DTYPE_TAG, "model_config": model.config.to_dict(),
                "tensors": tensors, **(extra or {})}
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for c in chunks:
            fh.write(c)


def read_manifest(path) -> tuple[dict, bytes]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from None
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a KANTSC01 checkpoint")
    (n,) = struct.unpack("<Q", data[8:16])
    try:
        manifest = json.loads(data[16:16 + n].decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"{path}: corrupt manifest ({e})") from None
    if manifest.get("dtype") != DTYPE_TAG:
        raise CheckpointError(f"{path}: unsupported dtype {manifest.get('dtype')!r}")
    return manifest, data[16 + n:]


def load_checkpoint(path) -> tuple[Model, dict]:
    manifest, blob = read_manifest(path)
    model = build_model(ModelConfig(**manifest["model_config"]))
    params = {p.name: p for p in model.params()}
    buffers = model.buffers()
    for t in manifest["tensors"]:
        p = params.get(t["name"])
        target = (p.value if p is not None else None) if t["kind"] == "param" else buffers.get(t["name"])
        if target is None or list(target.shape) != t["shape"]:
            raise CheckpointError(f"{path}: tensor {t['name']!r} does not match the architecture")
        raw = blob[t["offset"]:t["offset"] + t["nbytes"]]
        target[...] = np.frombuffer(raw, dtype="<f8").reshape(t["shape"])
    model.set_train(False)
    return model, manifest
