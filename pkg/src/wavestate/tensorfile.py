"""Portable tensor files.

Layout (all integers little-endian)::

    b"WSTF"            magic
    u16                format version (1)
    u8                 rank
    u32 * rank         dims
    u8                 dtype tag: 0 = f32, 1 = f64, 2 = u8
    payload            row-major, little-endian
    u32                CRC-32 of every preceding byte
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "TensorFileError",
    "BadMagic",
    "BadVersion",
    "ChecksumMismatch",
    "TruncatedFile",
    "encode_tensor",
    "decode_tensor",
    "write_tensor_file",
    "read_tensor_file",
]

MAGIC = b"WSTF"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}


class TensorFileError(ValueError):
    pass


class BadMagic(TensorFileError):
    pass


class BadVersion(TensorFileError):
    pass


class ChecksumMismatch(TensorFileError):
    pass


class TruncatedFile(TensorFileError):
    pass


def encode_tensor(array) -> bytes:
    arr = np.asarray(array)
    native = np.dtype(f"{arr.dtype.kind}{arr.dtype.itemsize}")  # drop any byte-order mark
    if native not in _TAGS:
        raise TypeError(f"unsupported dtype {arr.dtype}; use float32, float64 or uint8")
    if arr.ndim > 255:
        raise ValueError("rank exceeds 255")
    tag = _TAGS[native]
    header = MAGIC + struct.pack("<HB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape) + struct.pack("<B", tag)
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes(order="C")
    body = header + payload
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise TruncatedFile("file ends inside the magic bytes")
        raise BadMagic("not a tensor file (bad magic)")
    pos = 4
    if len(data) < pos + 3:
        raise TruncatedFile("file ends inside the header")
    version, rank = struct.unpack_from("<HB", data, pos)
    pos += 3
    if version != VERSION:
        raise BadVersion(f"unsupported tensor file version {version}")
    if len(data) < pos + 4 * rank + 1:
        raise TruncatedFile("file ends inside the dims")
    dims = struct.unpack_from(f"<{rank}I", data, pos)
    pos += 4 * rank
    (tag,) = struct.unpack_from("<B", data, pos)
    pos += 1
    if tag not in _DTYPES:
        raise TensorFileError(f"unknown dtype tag {tag}")
    dtype = _DTYPES[tag]
    size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) < pos + size + 4:
        raise TruncatedFile(f"payload needs {size} bytes plus checksum, file has {len(data) - pos}")
    if len(data) > pos + size + 4:
        raise TensorFileError("trailing bytes after checksum")
    (crc,) = struct.unpack_from("<I", data, pos + size)
    if zlib.crc32(data[: pos + size]) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch("CRC-32 mismatch")
    arr = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize, offset=pos)
    return arr.reshape(dims).astype(dtype.newbyteorder("="), copy=True)


def write_tensor_file(path, array) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def read_tensor_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())
