"""The FVOL container: one header line, little-endian binary payload.

Header: ``FVOL1 <W> <H> <D> <dtype> <channels>\\n`` with dtype ``f32`` or
``i32``. Payload is row-major with x fastest and channels interleaved.
Scalar images, label maps, displacement fields, probability masks, and
feature stacks all share the container; dtype and channel count
disambiguate, and the typed readers below enforce the expectation.
"""

from __future__ import annotations

import numpy as np

from .fields import DisplacementField, LabelMap, ProbMask, ScalarField
from .features import FeatureStack

MAGIC = "FVOL1"
_DTYPES = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4")}


class FvolError(ValueError):
    """Base for container format errors; carries the failing byte offset."""

    def __init__(self, path, message: str, byte_offset: int):
        self.byte_offset = int(byte_offset)
        super().__init__(f"{path}: {message} (byte offset {byte_offset})")


class FvolHeaderError(FvolError):
    pass


class FvolPayloadError(FvolError):
    pass


class FvolTypeError(FvolError):
    """The file parsed but its dtype/channels do not match the expectation."""


def _encode(arr: np.ndarray, dtype_name: str) -> bytes:
    w, h, d, c = arr.shape
    header = f"{MAGIC} {w} {h} {d} {dtype_name} {c}\n".encode("ascii")
    payload = np.ascontiguousarray(
        arr.transpose(2, 1, 0, 3), dtype=_DTYPES[dtype_name]
    ).tobytes()
    return header + payload


def write_fvol(value, path) -> None:
    """Serialize any grid container; f32 for reals, i32 for labels."""
    if isinstance(value, ScalarField):
        blob = _encode(value.data[..., None], "f32")
    elif isinstance(value, LabelMap):
        blob = _encode(value.labels[..., None], "i32")
    elif isinstance(value, DisplacementField):
        blob = _encode(value.vectors, "f32")
    elif isinstance(value, ProbMask):
        blob = _encode(value.probs, "f32")
    elif isinstance(value, FeatureStack):
        blob = _encode(value.data, "f32")
    else:
        raise TypeError(f"write_fvol: unsupported type {type(value).__name__}")
    with open(path, "wb") as f:
        f.write(blob)


def read_raw(path):
    """Parse header + payload; returns (array (W,H,D,C), dtype_name)."""
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n", 0, 256)
    if nl < 0:
        raise FvolHeaderError(path, "no header line found", 0)
    try:
        parts = raw[:nl].decode("ascii").split()
    except UnicodeDecodeError as e:
        raise FvolHeaderError(path, f"header is not ASCII: {e}", 0) from None
    if len(parts) != 6 or parts[0] != MAGIC:
        raise FvolHeaderError(path, f"malformed header {raw[:nl]!r}", 0)
    try:
        w, h, d, ch = int(parts[1]), int(parts[2]), int(parts[3]), int(parts[5])
    except ValueError:
        raise FvolHeaderError(path, f"non-integer dims in header {parts!r}", 0) from None
    dtype_name = parts[4]
    if dtype_name not in _DTYPES:
        raise FvolHeaderError(path, f"unknown dtype {dtype_name!r}", 0)
    if min(w, h, d, ch) < 1:
        raise FvolHeaderError(path, f"non-positive dims {w}x{h}x{d}x{ch}", 0)
    body = raw[nl + 1 :]
    expected = w * h * d * ch * 4
    if len(body) != expected:
        raise FvolPayloadError(
            path,
            f"payload has {len(body)} bytes, expected {expected}",
            nl + 1 + min(len(body), expected),
        )
    arr = np.frombuffer(body, dtype=_DTYPES[dtype_name]).reshape(d, h, w, ch)
    return arr.transpose(2, 1, 0, 3), dtype_name


def read_scalar(path) -> ScalarField:
    arr, dtype_name = read_raw(path)
    if dtype_name != "f32" or arr.shape[-1] != 1:
        raise FvolTypeError(path, f"expected f32 x 1 scalar field, got {dtype_name} x {arr.shape[-1]}", 0)
    return ScalarField(arr[..., 0].astype(np.float64))


def read_labels(path, num_classes: int | None = None) -> LabelMap:
    arr, dtype_name = read_raw(path)
    if dtype_name != "i32" or arr.shape[-1] != 1:
        raise FvolTypeError(path, f"expected i32 x 1 label map, got {dtype_name} x {arr.shape[-1]}", 0)
    labels = arr[..., 0]
    k = int(num_classes) if num_classes is not None else int(labels.max()) + 1
    k = max(k, 2)
    return LabelMap(labels, k)


def read_disp(path) -> DisplacementField:
    arr, dtype_name = read_raw(path)
    if dtype_name != "f32" or arr.shape[-1] != 3:
        raise FvolTypeError(path, f"expected f32 x 3 displacement, got {dtype_name} x {arr.shape[-1]}", 0)
    return DisplacementField(arr.astype(np.float64))


def read_probs(path) -> ProbMask:
    arr, dtype_name = read_raw(path)
    if dtype_name != "f32" or arr.shape[-1] < 2:
        raise FvolTypeError(path, f"expected f32 x K>=2 prob mask, got {dtype_name} x {arr.shape[-1]}", 0)
    probs = arr.astype(np.float64)
    # float32 storage rounds channel sums; renormalize within tolerance
    sums = probs.sum(axis=-1, keepdims=True)
    if np.abs(sums - 1.0).max() > 1e-3:
        raise FvolTypeError(path, "channels do not sum to 1; not a prob mask", 0)
    return ProbMask(np.clip(probs, 0.0, 1.0) / np.clip(sums, 1e-12, None))


def read_features(path) -> FeatureStack:
    arr, dtype_name = read_raw(path)
    if dtype_name != "f32":
        raise FvolTypeError(path, f"expected f32 feature stack, got {dtype_name}", 0)
    return FeatureStack(arr.astype(np.float64))
