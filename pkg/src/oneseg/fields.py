"""Grid containers (scalar volumes, displacement fields, label maps, probability
masks) and the multilinear warping operations everything else builds on.

Conventions: volumes are indexed ``[x, y, z]`` with dims ``(W, H, D)``; a 2D
grid is simply ``D == 1``. Displacements are in voxel units. Out-of-bounds
samples clamp to the nearest edge voxel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Triple = tuple[int, int, int]


class DimensionMismatchError(ValueError):
    """Two grids that must share dims do not. Carries both dim triples."""

    def __init__(self, what: str, dims_a, dims_b):
        self.dims_a = tuple(int(v) for v in dims_a)
        self.dims_b = tuple(int(v) for v in dims_b)
        super().__init__(f"{what}: dims {self.dims_a} != {self.dims_b}")


def _as_volume(data, name: str, dtype) -> np.ndarray:
    arr = np.array(data, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim == 1:
        arr = arr[:, None, None]
    if arr.ndim != 3:
        raise ValueError(f"{name}: expected a 2D or 3D array, got ndim={arr.ndim}")
    if arr.size == 0:
        raise ValueError(f"{name}: empty array")
    return arr


def _check_finite(arr: np.ndarray, name: str) -> None:
    if arr.dtype.kind == "f" and not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite values")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """A W x H x D grid of real intensities with spacing metadata."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = _as_volume(self.data, "ScalarField.data", np.float64)
        _check_finite(arr, "ScalarField.data")
        object.__setattr__(self, "data", _freeze(arr))
        sp = tuple(float(s) for s in self.spacing)
        if len(sp) == 2:
            sp = (sp[0], sp[1], 1.0)
        if len(sp) != 3 or any(s <= 0 for s in sp):
            raise ValueError(f"ScalarField.spacing: need 3 positive values, got {self.spacing}")
        object.__setattr__(self, "spacing", sp)

    @property
    def dims(self) -> Triple:
        return tuple(int(n) for n in self.data.shape)


@dataclass(frozen=True)
class DisplacementField:
    """Per-voxel (dx, dy, dz) displacement in voxel units, shape (W, H, D, 3)."""

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.array(self.vectors, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[-1] == 3:  # 2D grid given as (W, H, 3)
            arr = arr[:, :, None, :]
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise ValueError(
                f"DisplacementField.vectors: expected (W, H, D, 3), got {arr.shape}"
            )
        _check_finite(arr, "DisplacementField.vectors")
        object.__setattr__(self, "vectors", _freeze(arr))

    @property
    def dims(self) -> Triple:
        return tuple(int(n) for n in self.vectors.shape[:3])

    @classmethod
    def zeros(cls, dims) -> "DisplacementField":
        w, h, d = (int(n) for n in dims)
        return cls(np.zeros((w, h, d, 3)))


@dataclass(frozen=True)
class LabelMap:
    """Integer tissue labels in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        arr = _as_volume(self.labels, "LabelMap.labels", np.int32)
        k = int(self.num_classes)
        if k < 2:
            raise ValueError(f"LabelMap.num_classes: need K >= 2, got {k}")
        if arr.min() < 0 or arr.max() >= k:
            raise ValueError(
                f"LabelMap.labels: values must lie in [0, {k}), "
                f"got range [{arr.min()}, {arr.max()}]"
            )
        object.__setattr__(self, "labels", _freeze(arr))
        object.__setattr__(self, "num_classes", k)

    @property
    def dims(self) -> Triple:
        return tuple(int(n) for n in self.labels.shape)

    def one_hot(self) -> np.ndarray:
        """Float one-hot encoding, shape (W, H, D, K)."""
        k = self.num_classes
        out = np.zeros(self.labels.shape + (k,), dtype=np.float64)
        idx = np.arange(k)
        out[...] = (self.labels[..., None] == idx).astype(np.float64)
        return out


@dataclass(frozen=True)
class ProbMask:
    """Per-voxel class probabilities, shape (W, H, D, K); channels sum to 1."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=np.float64)
        if arr.ndim == 3:  # 2D grid given as (W, H, K)
            arr = arr[:, :, None, :]
        if arr.ndim != 4 or arr.shape[-1] < 2:
            raise ValueError(f"ProbMask.probs: expected (W, H, D, K>=2), got {arr.shape}")
        _check_finite(arr, "ProbMask.probs")
        if arr.min() < -1e-6 or arr.max() > 1.0 + 1e-6:
            raise ValueError("ProbMask.probs: values outside [0, 1]")
        err = np.abs(arr.sum(axis=-1) - 1.0).max()
        if err > 1e-6:
            raise ValueError(f"ProbMask.probs: channels sum to 1 violated by {err:.3g}")
        object.__setattr__(self, "probs", _freeze(arr))

    @property
    def dims(self) -> Triple:
        return tuple(int(n) for n in self.probs.shape[:3])

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[-1])

    def argmax_labels(self) -> LabelMap:
        return LabelMap(np.argmax(self.probs, axis=-1).astype(np.int32), self.num_classes)


# ---------------------------------------------------------------------------
# Multilinear sampling with edge clamp.
#
# The stencil caches corner indices, interpolation weights, and per-axis
# clamp masks so registration can reuse them for the chain rule into the
# displacement components.
# ---------------------------------------------------------------------------


class SampleStencil:
    """Precomputed trilinear gather for ``grid_point + displacement``."""

    def __init__(self, dims: Triple, disp: np.ndarray):
        w, h, d = dims
        self.dims = (w, h, d)
        i0 = []
        i1 = []
        frac = []
        unclamped = []
        coords = (
            np.arange(w, dtype=np.float64)[:, None, None],
            np.arange(h, dtype=np.float64)[None, :, None],
            np.arange(d, dtype=np.float64)[None, None, :],
        )
        for ax, n in enumerate((w, h, d)):
            raw = coords[ax] + disp[..., ax]
            pos = np.clip(raw, 0.0, n - 1.0)
            if n >= 2:
                lo = np.minimum(np.floor(pos), n - 2.0)
                hi = lo + 1.0
                unc = (raw > 0.0) & (raw < n - 1.0)
            else:
                lo = np.zeros_like(pos)
                hi = lo
                unc = np.zeros(pos.shape, dtype=bool)
            i0.append(lo.astype(np.int64))
            i1.append(hi.astype(np.int64))
            frac.append(pos - lo)
            unclamped.append(unc)
        self._i = (i0, i1)
        self.frac = frac
        self.unclamped = unclamped
        # flat gather index for each of the 8 corners, keyed by (bx, by, bz)
        self._flat = {}
        for bx in (0, 1):
            for by in (0, 1):
                for bz in (0, 1):
                    ix = self._i[bx][0]
                    iy = self._i[by][1]
                    iz = self._i[bz][2]
                    self._flat[(bx, by, bz)] = (ix * h + iy) * d + iz

    def _weights(self, bits, skip_axis=None):
        w = None
        for ax, b in enumerate(bits):
            if ax == skip_axis:
                continue
            f = self.frac[ax]
            term = f if b else 1.0 - f
            w = term if w is None else w * term
        if w is None:
            w = np.ones(self.frac[0].shape)
        return w

    def apply(self, vol: np.ndarray) -> np.ndarray:
        """Sample ``vol`` (W,H,D) or (W,H,D,C) at the stencil positions."""
        chan = vol.ndim == 4
        flat = vol.reshape(-1, vol.shape[-1]) if chan else vol.reshape(-1)
        out = None
        for bits, idx in self._flat.items():
            w = self._weights(bits)
            vals = flat[idx.ravel()].reshape(idx.shape + ((vol.shape[-1],) if chan else ()))
            term = vals * (w[..., None] if chan else w)
            out = term if out is None else out + term
        return out

    def axis_derivative(self, vol: np.ndarray, axis: int) -> np.ndarray:
        """d(sampled value)/d(displacement component ``axis``), zero where clamped."""
        chan = vol.ndim == 4
        flat = vol.reshape(-1, vol.shape[-1]) if chan else vol.reshape(-1)
        out = None
        for bits, idx in self._flat.items():
            sign = 1.0 if bits[axis] else -1.0
            w = self._weights(bits, skip_axis=axis) * sign
            vals = flat[idx.ravel()].reshape(idx.shape + ((vol.shape[-1],) if chan else ()))
            term = vals * (w[..., None] if chan else w)
            out = term if out is None else out + term
        mask = self.unclamped[axis]
        return out * (mask[..., None] if chan else mask)

    def backprop_disp(self, vol: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        """Chain an upstream gradient on the sampled output into (W,H,D,3).

        ``vol`` is the volume that was sampled, ``grad_out`` matches the shape
        of ``apply(vol)``.
        """
        g = np.zeros(self.dims + (3,))
        chan = vol.ndim == 4
        for ax in range(3):
            deriv = self.axis_derivative(vol, ax)
            g[..., ax] = (deriv * grad_out).sum(axis=-1) if chan else deriv * grad_out
        return g


def warp_array(vol: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Warp a raw (W,H,D[,C]) array by (W,H,D,3) voxel displacements."""
    return SampleStencil(vol.shape[:3], disp).apply(vol)


def warp_scalar(img: ScalarField, disp: DisplacementField, mode: str = "linear") -> ScalarField:
    """Resample ``img`` at ``p + disp(p)`` with multilinear interpolation.

    Out-of-bounds positions clamp to the nearest edge voxel.
    """
    if mode != "linear":
        raise ValueError(f"warp_scalar: unsupported mode {mode!r}")
    if img.dims != disp.dims:
        raise DimensionMismatchError("warp_scalar: image vs displacement", img.dims, disp.dims)
    return ScalarField(warp_array(img.data, disp.vectors), img.spacing)


def warp_labels(labels: LabelMap, disp: DisplacementField) -> LabelMap:
    """Warp a label map: one-hot encode, warp channels linearly, argmax.

    Ties resolve to the lowest class index.
    """
    if labels.dims != disp.dims:
        raise DimensionMismatchError("warp_labels: labels vs displacement", labels.dims, disp.dims)
    warped = warp_array(labels.one_hot(), disp.vectors)
    return LabelMap(np.argmax(warped, axis=-1).astype(np.int32), labels.num_classes)


def warp_prob_channels(labels: LabelMap, disp: DisplacementField) -> ProbMask:
    """Warped one-hot channels kept soft (no argmax); a valid ProbMask."""
    if labels.dims != disp.dims:
        raise DimensionMismatchError("warp_prob_channels", labels.dims, disp.dims)
    warped = warp_array(labels.one_hot(), disp.vectors)
    # convex weights on one-hot channels can drift from sum=1 by rounding only
    warped = np.clip(warped, 0.0, 1.0)
    warped /= warped.sum(axis=-1, keepdims=True)
    return ProbMask(warped)
