"""Binary parameter checkpoints.

Layout: ``b"ARLCKPT\\0"`` magic, uint32 format version, uint64 header length,
a UTF-8 JSON header (sorted keys, no whitespace) listing each tensor's name,
shape and byte offset, then the raw little-endian float64 payload.
Write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ARLCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        raw = a.tobytes()
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = len(MAGIC) + struct.calcsize("<IQ")
    header = json.loads(blob[start : start + hlen])
    body = memoryview(blob)[start + hlen :]
    out: dict[str, np.ndarray] = {}
    for e in header["tensors"]:
        raw = body[e["offset"] : e["offset"] + e["nbytes"]]
        out[e["name"]] = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).astype(np.float64)
    return out, header["meta"]


def save(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())


def module_state(module, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + k: p.value for k, p in module.named_params().items()}


def load_module_state(module, tensors: dict[str, np.ndarray], prefix: str = "") -> None:
    for k, p in module.named_params().items():
        key = prefix + k
        if key not in tensors:
            raise CheckpointError(f"missing tensor {key!r}")
        if tensors[key].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {key!r}: {tensors[key].shape} vs {p.shape}")
        p.value[...] = tensors[key]
