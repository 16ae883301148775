"""Bit-exact binary weight container.

Layout (all integers little-endian u32):
    magic "RTHD" | version | tensor_count
    per tensor: name_len | name (UTF-8) | ndim | dims... | f32 data (row-major)
"""

from __future__ import annotations

import struct
from typing import Dict

import numpy as np

MAGIC = b"RTHD"
VERSION = 1
MAX_DIMS = 8


class WeightFormatError(ValueError):
    """Malformed, truncated or unsupported weight container."""


def save_tensors(tensors: Dict[str, np.ndarray], path) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        if data.ndim > MAX_DIMS:
            raise WeightFormatError(f"tensor '{name}' has {data.ndim} dims (max {MAX_DIMS})")
        if any(d >= 2 ** 32 for d in data.shape):
            raise WeightFormatError(f"tensor '{name}' dimension overflows u32")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise WeightFormatError(
                f"truncated container: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_tensors(path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise WeightFormatError("bad magic: not an RTHD weight container")
    version = r.u32()
    if version != VERSION:
        raise WeightFormatError(f"unsupported container version {version}")
    count = r.u32()
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = r.u32()
        name = r.take(name_len).decode("utf-8")
        ndim = r.u32()
        if ndim > MAX_DIMS:
            raise WeightFormatError(f"tensor '{name}' declares {ndim} dims (max {MAX_DIMS})")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        numel = 1
        for d in dims:
            numel *= d
        if numel * 4 > len(blob) - r.pos:
            raise WeightFormatError(f"tensor '{name}' data overruns the file")
        data = np.frombuffer(r.take(numel * 4), dtype="<f4").reshape(dims)
        tensors[name] = np.ascontiguousarray(data, dtype=np.float32)
    if r.pos != len(blob):
        raise WeightFormatError(f"{len(blob) - r.pos} trailing bytes after last tensor")
    return tensors
