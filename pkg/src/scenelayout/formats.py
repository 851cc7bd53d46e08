"""Binary map formats: DPT1 depth, NRM1 normals, P5 PGM masks.

DPT1: magic "DPT1", little-endian u32 width, u32 height, then width*height
float32 values row-major. NRM1: magic "NRM1", same header, 3 float32 per
pixel. Masks: binary PGM (P5, maxval 255) where 0 = background and 255 =
covered.
"""
from __future__ import annotations

import struct

import numpy as np

_HEADER = struct.Struct("<4sII")


def _write_map(path, magic, array, channels):
    arr = np.asarray(array, dtype=np.float32)
    height, width = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, width, height))
        fh.write(np.ascontiguousarray(arr).tobytes())


def _read_map(path, magic, channels):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        tag, width, height = _HEADER.unpack(head)
        if tag != magic:
            raise ValueError(f"{path}: expected magic {magic!r}, got {tag!r}")
        count = width * height * channels
        data = np.frombuffer(fh.read(count * 4), dtype="<f4")
        if data.size != count:
            raise ValueError(f"{path}: truncated payload")
    shape = (height, width) if channels == 1 else (height, width, channels)
    return data.reshape(shape).astype(np.float64)


def write_depth(path, values) -> None:
    """Write an (h, w) depth array as DPT1 (float32)."""
    _write_map(path, b"DPT1", values, 1)


def read_depth(path) -> np.ndarray:
    return _read_map(path, b"DPT1", 1)


def write_normals(path, values) -> None:
    """Write an (h, w, 3) normal array as NRM1 (float32)."""
    arr = np.asarray(values)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("normals must be an (h, w, 3) array")
    _write_map(path, b"NRM1", arr, 3)


def read_normals(path) -> np.ndarray:
    return _read_map(path, b"NRM1", 3)


def write_mask(path, mask) -> None:
    """Write a boolean mask as binary PGM (0 background, 255 covered)."""
    m = np.asarray(mask, dtype=bool)
    height, width = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write((m.astype(np.uint8) * 255).tobytes())


def read_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    pos += 1  # single whitespace after maxval
    raster = np.frombuffer(data[pos:pos + width * height], dtype=np.uint8)
    if raster.size != width * height:
        raise ValueError(f"{path}: truncated raster")
    return raster.reshape(height, width) > 0
