"""Tensor files: a one-line text header followed by raw little-endian data.

Header: ``TNSR1 <dtype> <rank> <dim>...`` and a newline, e.g.
``TNSR1 f32 2 3 4``. Files ending in ``.npy`` are read and written with
numpy's own format instead.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..ir.types import ElementType

MAGIC = "TNSR1"


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    element = ElementType.from_dtype(array.dtype.newbyteorder("<"))
    header = " ".join([MAGIC, element.value, str(array.ndim), *map(str, array.shape)]) + "\n"
    return header.encode("ascii") + np.ascontiguousarray(array, dtype=element.dtype).tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    end = data.find(b"\n")
    if end < 0:
        raise ValueError("tensor file has no header line")
    fields = data[:end].decode("ascii", "replace").split()
    if len(fields) < 3 or fields[0] != MAGIC:
        raise ValueError(f"not a {MAGIC} tensor file")
    try:
        element = ElementType(fields[1])
        rank = int(fields[2])
        shape = tuple(int(x) for x in fields[3:])
    except ValueError:
        raise ValueError(f"bad tensor header {data[:end]!r}") from None
    if len(shape) != rank or any(d < 0 for d in shape):
        raise ValueError(f"bad tensor header {data[:end]!r}")
    payload = data[end + 1 :]
    expected = int(np.prod(shape, dtype=np.int64)) * element.width
    if len(payload) != expected:
        raise ValueError(f"tensor payload has {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=element.dtype).reshape(shape).copy()


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path, allow_pickle=False)
    return decode_tensor(path.read_bytes())


def write_tensor(path, array: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, np.asarray(array), allow_pickle=False)
    else:
        path.write_bytes(encode_tensor(array))
