"""RIPF feature files: one view of one sample.

Layout, all little-endian::

    offset  size  field
    0       4     magic  b"RIPF"
    4       2     u16 version (= 1)
    6       4     u32 T, number of frames
    10      4     u32 dim, feature width
    14      4*T*dim  float32 frames, row-major

Any external embedding dump holding ``T x dim`` row-major floats can be
wrapped with :func:`wrap_raw`.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RIPF"
VERSION = 1
HEADER = struct.Struct("<4sHII")


class DataError(Exception):
    """Base class for dataset and file-format errors."""


class BadMagicError(DataError):
    pass


class VersionError(DataError):
    pass


class DimMismatchError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class TruncatedPayloadError(DataError):
    pass


class TrailingBytesError(DataError):
    pass


class UnknownLabelError(DataError):
    pass


class ManifestError(DataError):
    pass


def encode(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"frames must be a non-empty [T, dim] array, got shape {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise ValueError("frames contain non-finite values")
    T, dim = frames.shape
    return HEADER.pack(MAGIC, VERSION, T, dim) + np.ascontiguousarray(frames, dtype="<f4").tobytes()


def decode(buf: bytes, expect_dim: int | None = None, expect_T: int | None = None, name: str = "") -> np.ndarray:
    """Parse a RIPF buffer into a float32 ``[T, dim]`` array, validating every header field."""
    where = f" ({name})" if name else ""
    if len(buf) < HEADER.size:
        raise TruncatedPayloadError(f"header needs {HEADER.size} bytes, file has {len(buf)}{where}")
    magic, version, T, dim = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}{where}")
    if version != VERSION:
        raise VersionError(f"unsupported version {version}, expected {VERSION}{where}")
    if expect_dim is not None and dim != expect_dim:
        raise DimMismatchError(f"feature dim {dim} != manifest dim {expect_dim}{where}")
    if expect_T is not None and T != expect_T:
        raise LengthMismatchError(f"frame count {T} != manifest T {expect_T}{where}")
    if T < 1 or dim < 1:
        raise LengthMismatchError(f"empty sequence T={T} dim={dim}{where}")
    need = HEADER.size + 4 * T * dim
    if len(buf) < need:
        raise TruncatedPayloadError(f"payload needs {need} bytes, file has {len(buf)}{where}")
    if len(buf) > need:
        raise TrailingBytesError(f"{len(buf) - need} unexpected trailing bytes{where}")
    frames = np.frombuffer(buf, dtype="<f4", count=T * dim, offset=HEADER.size).reshape(T, dim)
    if not np.all(np.isfinite(frames)):
        raise DataError(f"non-finite values in payload{where}")
    return frames.astype(np.float32)


def write(path: str | Path, frames: np.ndarray) -> None:
    Path(path).write_bytes(encode(frames))


def read(path: str | Path, expect_dim: int | None = None, expect_T: int | None = None, name: str = "") -> np.ndarray:
    return decode(Path(path).read_bytes(), expect_dim, expect_T, name or str(path))


def wrap_raw(raw_path: str | Path, T: int, dim: int, out_path: str | Path, dtype: str = "<f4") -> None:
    """Wrap a headerless row-major ``T x dim`` float dump into a RIPF file."""
    raw = np.fromfile(raw_path, dtype=dtype)
    if raw.size != T * dim:
        raise LengthMismatchError(f"{raw_path}: {raw.size} values, expected {T}x{dim}")
    write(out_path, raw.reshape(T, dim))
