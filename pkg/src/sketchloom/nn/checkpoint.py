"""Binary checkpoint container.

Layout: magic ``b"SKLM"``, u32 format version, u64 metadata length, UTF-8
JSON metadata, then little-endian float32 payloads in directory order. The
metadata's ``tensors`` list holds ``{name, shape, offset}`` with byte offsets
relative to the start of the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SKLM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


class CheckpointFormatError(ValueError):
    pass


def encode_checkpoint(tensors: dict[str, np.ndarray], metadata: dict | None = None) -> bytes:
    directory = []
    payload = []
    offset = 0
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    meta = dict(metadata or {})
    meta["tensors"] = directory
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(meta_bytes)) + meta_bytes + b"".join(payload)


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < _HEADER.size:
        raise CheckpointFormatError("file too short for a checkpoint header")
    magic, version, meta_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint format version {version}")
    start = _HEADER.size
    if start + meta_len > len(data):
        raise CheckpointFormatError("truncated metadata block")
    try:
        meta = json.loads(data[start : start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable metadata: {exc}") from None
    base = start + meta_len
    tensors = {}
    for entry in meta.get("tensors", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin = base + int(entry["offset"])
        end = begin + 4 * count
        if end > len(data):
            raise CheckpointFormatError(f"tensor {entry['name']!r} runs past end of file")
        tensors[entry["name"]] = np.frombuffer(data[begin:end], dtype="<f4").reshape(shape).astype(np.float32)
    return meta, tensors


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(tensors, metadata))
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_checkpoint(Path(path).read_bytes())
