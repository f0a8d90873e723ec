"""UHRT binary tensor files.

Layout (little-endian)::

    b"UHRT" | u32 version=1 | u8 dtype | u8 ndim | ndim x u64 dims | payload

dtype codes: 0 = f32, 1 = f64, 2 = i32.  Payload is row-major.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import UHRBatError

MAGIC = b"UHRT"
VERSION = 1

_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i4")}
_KIND_TO_CODE = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int32"): 2}
_HEADER = struct.Struct("<4sIBB")


class TensorFormatError(UHRBatError, ValueError):
    pass


def encode_uhrt(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    code = _KIND_TO_CODE.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise TensorFormatError(f"dtype {arr.dtype} has no UHRT code (use f32, f64 or i32)")
    if arr.ndim > 255:
        raise TensorFormatError("too many dimensions")
    head = _HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_CODE_TO_DTYPE[code]).tobytes()
    return head + dims + payload


def decode_uhrt(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TensorFormatError("truncated header")
    magic, version, code, ndim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported UHRT version {version}")
    if code not in _CODE_TO_DTYPE:
        raise TensorFormatError(f"unknown dtype code {code}")
    off = _HEADER.size
    if len(buf) < off + 8 * ndim:
        raise TensorFormatError("truncated dims")
    shape = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    dtype = _CODE_TO_DTYPE[code]
    count = int(np.prod(shape, dtype=np.uint64)) if ndim else 1
    if len(buf) - off != count * dtype.itemsize:
        raise TensorFormatError(
            f"payload is {len(buf) - off} bytes, expected {count * dtype.itemsize} for shape {shape}"
        )
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off).reshape(shape)
    return arr.astype(dtype.newbyteorder("="))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the destination directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_uhrt(path: str | os.PathLike, array: np.ndarray) -> None:
    atomic_write_bytes(path, encode_uhrt(array))


def read_uhrt(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_uhrt(fh.read())


def read_features(path: str | os.PathLike) -> np.ndarray:
    """Read a float tensor and widen to float64."""
    arr = read_uhrt(path)
    if arr.dtype.kind != "f":
        raise TensorFormatError(f"{path}: expected a float tensor, got {arr.dtype}")
    return arr.astype(np.float64)


def read_labels(path: str | os.PathLike) -> np.ndarray:
    arr = read_uhrt(path)
    if arr.dtype != np.int32:
        raise TensorFormatError(f"{path}: expected an i32 tensor, got {arr.dtype}")
    return arr.astype(np.int64)
