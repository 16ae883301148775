"""Binary PPM (P6) image and PGM (P5) mask I/O, maxval 255.

Pixels map to [0, 1] via /255 on read; writes clamp, scale and round half up,
so 8-bit-quantized tensors round-trip bit-exactly.  Masks use 255 for
corrupted pixels and 0 for known pixels.
"""

from __future__ import annotations

import numpy as np

from .tensor_ops import DTYPE


class ImageFormatError(ValueError):
    """Malformed or unsupported PNM data."""


def _parse_header(blob: bytes, magic: bytes, path):
    if blob[:2] != magic:
        got = blob[:2].decode("ascii", "replace")
        raise ImageFormatError(
            f"{path}: unsupported format magic '{got}' (expected {magic.decode()})"
        )
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(blob):
            raise ImageFormatError(f"{path}: truncated header")
        ch = blob[pos:pos + 1]
        if ch == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(blob) and blob[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise ImageFormatError(f"{path}: unexpected byte {ch!r} in header")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise ImageFormatError(f"{path}: missing whitespace after maxval")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: maxval {maxval} unsupported (must be 255)")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: invalid extents {width}x{height}")
    return width, height, pos


def read_image(path) -> np.ndarray:
    """Read a P6 PPM into a [3, H, W] float32 tensor in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    width, height, pos = _parse_header(blob, b"P6", path)
    need = width * height * 3
    raw = blob[pos:pos + need]
    if len(raw) != need:
        raise ImageFormatError(f"{path}: expected {need} pixel bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return (arr.transpose(2, 0, 1).astype(DTYPE) / DTYPE(255.0)).astype(DTYPE)


def write_image(tensor: np.ndarray, path) -> None:
    """Write a [3, H, W] tensor in [0, 1] as a P6 PPM (round half up)."""
    if tensor.ndim != 3 or tensor.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] tensor, got shape {tensor.shape}")
    _, h, w = tensor.shape
    q = np.floor(np.clip(tensor, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(q.transpose(1, 2, 0).tobytes())


def read_mask(path) -> np.ndarray:
    """Read a P5 PGM mask (255 = corrupted) into a binary [1, H, W] tensor."""
    with open(path, "rb") as fh:
        blob = fh.read()
    width, height, pos = _parse_header(blob, b"P5", path)
    need = width * height
    raw = blob[pos:pos + need]
    if len(raw) != need:
        raise ImageFormatError(f"{path}: expected {need} mask bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    if not np.isin(arr, (0, 255)).all():
        raise ImageFormatError(f"{path}: mask bytes must be 0 or 255")
    return (arr == 255).astype(DTYPE)[None]


def write_mask(mask: np.ndarray, path) -> None:
    """Write a binary [1, H, W] mask as a P5 PGM with 255 marking corruption."""
    if mask.ndim != 3 or mask.shape[0] != 1:
        raise ValueError(f"expected [1, H, W] mask, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask values must be binary {0, 1}")
    _, h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((mask[0] * 255).astype(np.uint8).tobytes())
