"""Binary checkpoint with named float64 tensors; load(save(x)) is bit-exact.

Byte layout, all integers little-endian:

    magic   4 bytes   b"ZXNN"
    version u32       currently 1
    n_count u32       number of counters
      per counter: name_len u16, name utf-8, value i64
    n_tens  u32       number of tensors
      per tensor: name_len u16, name utf-8, ndim u8, dims u32 each,
                  data float64 little-endian, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ZXError

MAGIC = b"ZXNN"
VERSION = 1


class CheckpointError(ZXError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path, tensors: dict[str, np.ndarray], counters: dict[str, int] | None = None) -> None:
    counters = counters or {}
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(counters))]
    for name, value in sorted(counters.items()):
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<q", int(value)))
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in sorted(tensors.items()):
        arr = np.asarray(arr, dtype="<f8")
        if not arr.flags.c_contiguous:
            arr = arr.copy(order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    counters = {}
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode("utf-8")
        counters[name] = r.unpack("<q")
    tensors = {}
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode("utf-8")
        ndim = r.unpack("<B")
        shape = tuple(r.unpack("<I") for _ in range(ndim))
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape)
        tensors[name] = data.astype(np.float64).reshape(shape)
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")
    return tensors, counters
