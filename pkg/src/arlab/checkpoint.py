"""Checkpoint files: magic header, JSON metadata, then raw little-endian float64 arrays.

Layout::

    b"ARLCKPT\\0"  (8 bytes)
    version        uint32 LE
    meta length    uint64 LE
    meta           UTF-8 JSON; meta["arrays"] lists name, shape and byte offset of each array
    payload        concatenated '<f8' arrays
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

MAGIC = b"ARLCKPT\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")


class CheckpointError(OSError):
    pass


def save(path, meta: dict, arrays: dict) -> Path:
    """Write atomically (temp file + rename) so a crash never leaves a torn checkpoint."""
    path = Path(path)
    table, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    meta = dict(meta, arrays=table)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(blob)))
        f.write(blob)
        for c in chunks:
            f.write(c)
    os.replace(tmp, path)
    return path


def load(path):
    """Return (meta, arrays). Raises CheckpointError on a bad header or truncated payload."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    magic, version, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _HEADER.size
    meta = json.loads(data[start : start + n].decode("utf-8"))
    payload = memoryview(data)[start + n :]
    arrays = {}
    for entry in meta.pop("arrays"):
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path}: truncated payload at array {entry['name']}")
        a = np.frombuffer(payload[entry["offset"] : end], dtype="<f8").reshape(entry["shape"])
        arrays[entry["name"]] = a.astype(np.float64)
    return meta, arrays


def save_trainer(path, trainer, extra: dict | None = None) -> Path:
    meta, arrays = trainer.state()
    meta["layer_sizes"] = {
        f"{who}.{net}": list(params.layer_sizes)
        for who, agent in (("protagonist", trainer.protagonist), ("adversary", trainer.adversary))
        if agent is not None
        for net, params in agent.networks().items()
    }
    if extra:
        meta.update(extra)
    return save(path, meta, arrays)


def check_compatible(meta: dict, trainer):
    """Layer sizes recorded in a checkpoint must match the freshly built trainer."""
    for who, agent in (("protagonist", trainer.protagonist), ("adversary", trainer.adversary)):
        if agent is None:
            continue
        for net, params in agent.networks().items():
            want = meta.get("layer_sizes", {}).get(f"{who}.{net}")
            if want is None or list(want) != list(params.layer_sizes):
                raise ConfigError(
                    "checkpoint",
                    f"network {who}.{net} has layer sizes {want}, environment/config expects {list(params.layer_sizes)}",
                )


def load_trainer(path, trainer):
    meta, arrays = load(path)
    check_compatible(meta, trainer)
    trainer.load_state(meta, arrays)
    return meta
