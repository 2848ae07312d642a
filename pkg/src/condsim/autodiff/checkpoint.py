"""Parameter checkpoints.

Binary layout (little-endian):
    magic     8 bytes  b"CONDSIM\\0"
    version   uint32   currently 1
    count     uint32   number of named tensors
    per tensor:
        name_len  uint16, name utf-8 bytes
        ndim      uint8, dims uint32[ndim]
        data      float32, row-major
A JSON manifest (same path + ".json") lists names/shapes and carries
user metadata, so checkpoints are inspectable without the binary reader.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint"]

MAGIC = b"CONDSIM\0"
VERSION = 1


def save_checkpoint(path, params: dict, meta: dict | None = None) -> None:
    path = Path(path)
    names = sorted(params)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(names)))
        for name in names:
            arr = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())
    manifest = {
        "format": "condsim-checkpoint",
        "version": VERSION,
        "tensors": [{"name": n, "shape": list(np.shape(params[n].data if isinstance(params[n], Tensor) else params[n]))}
                    for n in names],
        "meta": meta or {},
    }
    with open(path.with_name(path.name + ".json"), "w") as f:
        json.dump(manifest, f, indent=2)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a condsim checkpoint: bad magic {magic!r}")
        version, count = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape)
            tensors[name] = data.astype(np.float32)
    manifest_path = path.with_name(path.name + ".json")
    meta = {}
    if manifest_path.exists():
        with open(manifest_path) as f:
            meta = json.load(f).get("meta", {})
    return tensors, meta
