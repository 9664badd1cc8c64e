"""Deterministic PNG slice rendering for figures and eyeballing runs.

The encoder is self-contained (stdlib zlib, fixed settings) so identical
inputs always produce identical bytes. Intensity slices are min-max
windowed to 8-bit grayscale; label slices use a fixed categorical palette.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .fields import LabelMap, ProbMask, ScalarField

# background black, then well-separated categorical colors
LABEL_PALETTE = (
    (0, 0, 0),
    (230, 80, 60),
    (70, 160, 230),
    (110, 200, 90),
    (240, 200, 70),
    (170, 110, 220),
    (240, 140, 50),
    (90, 210, 200),
    (200, 90, 160),
    (150, 150, 150),
)


def _chunk(tag: bytes, body: bytes) -> bytes:
    return (
        struct.pack(">I", len(body))
        + tag
        + body
        + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
    )


def write_png(path, pixels: np.ndarray) -> None:
    """Write (rows, cols) grayscale or (rows, cols, 3) RGB uint8 pixels."""
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim == 2:
        color_type = 0
        rows = arr[:, :, None]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
        rows = arr
    else:
        raise ValueError(f"write_png: expected (r,c) or (r,c,3), got {arr.shape}")
    height, width = rows.shape[:2]
    raw = b"".join(b"\x00" + rows[r].tobytes() for r in range(height))
    ihdr = struct.pack(">IIBBBBB", width, height, 8, color_type, 0, 0, 0)
    blob = (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 6))
        + _chunk(b"IEND", b"")
    )
    with open(path, "wb") as f:
        f.write(blob)


def _slice2d(vol: np.ndarray, axis: int, index: int) -> np.ndarray:
    if not 0 <= axis <= 2:
        raise ValueError(f"slice axis must be 0..2, got {axis}")
    if not 0 <= index < vol.shape[axis]:
        raise IndexError(
            f"slice index {index} out of range for axis {axis} of size {vol.shape[axis]}"
        )
    plane = np.take(vol, index, axis=axis)
    return plane.T  # rows = second remaining axis, cols = first


def emit_slice_png(value, axis: int, index: int, path, palette=LABEL_PALETTE) -> None:
    """Render one slice of a field or mask to a PNG file."""
    if isinstance(value, ScalarField):
        plane = _slice2d(value.data, axis, index)
        lo, hi = float(plane.min()), float(plane.max())
        if hi > lo:
            gray = np.round((plane - lo) / (hi - lo) * 255.0)
        else:
            gray = np.full(plane.shape, 128.0)
        write_png(path, gray.astype(np.uint8))
    elif isinstance(value, (LabelMap, ProbMask)):
        labels = value if isinstance(value, LabelMap) else value.argmax_labels()
        plane = _slice2d(labels.labels, axis, index)
        if labels.num_classes > len(palette):
            raise ValueError(
                f"palette has {len(palette)} colors for {labels.num_classes} classes"
            )
        lut = np.array(palette[: labels.num_classes], dtype=np.uint8)
        write_png(path, lut[plane])
    else:
        raise TypeError(f"emit_slice_png: unsupported type {type(value).__name__}")
