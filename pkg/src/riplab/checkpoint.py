"""Checkpoint container: a JSON header followed by raw float64 arrays.

Layout::

    offset  size  field
    0       4     magic  b"RIPC"
    4       2     u16 LE version (1)
    6       4     u32 LE header length H
    10      H     UTF-8 JSON header {"meta": {...}, "arrays": [{name, shape, offset}, ...]}
    10+H    ...   float64 LE blobs, offsets relative to the end of the header

Arrays are written in sorted name order and the header is serialized with
sorted keys, so equal contents give equal bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RIPC"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def dumps(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    index, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"meta": meta, "arrays": index}, sort_keys=True, separators=(",", ":")).encode()
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(blobs)


def loads(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(buf) < _PREFIX.size:
        raise CheckpointError("checkpoint truncated before header")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    if len(buf) < start:
        raise CheckpointError("checkpoint truncated inside header")
    try:
        header = json.loads(buf[_PREFIX.size:start])
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    arrays = {}
    body = memoryview(buf)[start:]
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        lo = entry["offset"]
        if lo + 8 * n > len(body):
            raise CheckpointError(f"array {entry['name']} runs past the end of the file")
        arrays[entry["name"]] = np.frombuffer(body[lo:lo + 8 * n], dtype="<f8").reshape(shape).astype(np.float64)
    return header["meta"], arrays


def save(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(meta, arrays))


def load(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
