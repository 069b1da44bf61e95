"""Binary tensor format shared by frame files and checkpoints.

Layout (little-endian): ``b"TAMT"``, u32 version, u32 rank, rank × u64 dims,
then the values as 32-bit IEEE-754 floats in row-major order.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO

import numpy as np

from ..errors import ParseError

TENSOR_MAGIC = b"TAMT"
TENSOR_VERSION = 1


def write_tensor(stream: BinaryIO, array) -> None:
    arr = np.array(array, dtype="<f4", order="C")
    stream.write(TENSOR_MAGIC)
    stream.write(struct.pack("<II", TENSOR_VERSION, arr.ndim))
    stream.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    stream.write(arr.tobytes(order="C"))


def read_tensor(stream: BinaryIO, source: str = "<stream>") -> np.ndarray:
    magic = stream.read(4)
    if magic != TENSOR_MAGIC:
        raise ParseError(f"{source}: bad tensor magic {magic!r}")
    header = stream.read(8)
    if len(header) != 8:
        raise ParseError(f"{source}: truncated tensor header")
    version, rank = struct.unpack("<II", header)
    if version != TENSOR_VERSION:
        raise ParseError(f"{source}: unsupported tensor version {version}")
    raw_dims = stream.read(8 * rank)
    if len(raw_dims) != 8 * rank:
        raise ParseError(f"{source}: truncated tensor dims")
    dims = struct.unpack(f"<{rank}Q", raw_dims)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = stream.read(4 * count)
    if len(payload) != 4 * count:
        raise ParseError(f"{source}: expected {count} values, found {len(payload) // 4}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)


def tensor_to_bytes(array) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, array)
    return buf.getvalue()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))


def save_tensor(path, array) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = read_tensor(fh, source=str(path))
        if fh.read(1):
            raise ParseError(f"{path}: trailing bytes after tensor")
    return arr
