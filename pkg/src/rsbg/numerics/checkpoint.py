"""Binary checkpoint file.

Layout (all integers little-endian)::

    b"RSBGCKPT"  u32 version
    u64 header_len  header_len bytes of UTF-8 JSON (hyperparameters)
    u32 record_count
    per record:
        u32 name_len  name bytes (UTF-8)
        u32 ndim  ndim x u64 dims
        prod(dims) x float64 ('<f8')
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"RSBGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params: Mapping[str, np.ndarray], hyper: Mapping[str, Any]) -> bytes:
    header = json.dumps(hyper, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(header)), header]
    parts.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 8

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {VERSION}")
    (hlen,) = take("<Q")
    hyper = json.loads(blob[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = take("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        if pos + 8 * n > len(blob):
            raise CheckpointError(f"truncated payload for {name!r}")
        params[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(
            np.float64
        )
        pos += 8 * n
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last record")
    return params, hyper


def save(path, params: Mapping[str, np.ndarray], hyper: Mapping[str, Any]) -> None:
    Path(path).write_bytes(dumps(params, hyper))


def load(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
