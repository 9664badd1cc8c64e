"""Sliding-window sums and edge-clamped 1D convolutions, with exact adjoints.

Window sums run over the three spatial axes of a (W,H,D) or (W,H,D,C) array;
a trailing channel axis rides along for free. Offsets follow the convention
``window(i) = [i+lo, i+hi]`` truncated to the grid, so a window of side ``n``
uses ``lo = -((n-1)//2)``, ``hi = n//2``. The adjoint of a truncated window
sum with offsets (lo, hi) is the one with offsets (-hi, -lo).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def window_offsets(n: int) -> tuple[int, int]:
    if n < 1:
        raise ValueError(f"window size must be >= 1, got {n}")
    return -((n - 1) // 2), n // 2


def box_sum_1d(arr: np.ndarray, lo: int, hi: int, axis: int) -> np.ndarray:
    """Truncated windowed sum along one axis via cumulative sums."""
    n = arr.shape[axis]
    c = np.cumsum(arr, axis=axis)
    pad_shape = list(arr.shape)
    pad_shape[axis] = 1
    c0 = np.concatenate([np.zeros(pad_shape, dtype=arr.dtype), c], axis=axis)
    iu = np.minimum(np.arange(n) + hi, n - 1) + 1
    il = np.clip(np.arange(n) + lo, 0, n)
    return np.take(c0, iu, axis=axis) - np.take(c0, il, axis=axis)


def box_sum(arr: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Windowed sum over the three spatial axes."""
    out = arr
    for ax in range(3):
        if arr.shape[ax] > 1:
            out = box_sum_1d(out, lo, hi, ax)
        else:
            out = out.copy() if out is arr else out
    return out


def box_sum_adjoint(arr: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return box_sum(arr, -hi, -lo)


def window_counts(dims, lo: int, hi: int) -> np.ndarray:
    """Number of in-grid voxels in each truncated window, shape (W,H,D)."""
    per_axis = []
    for n in dims:
        if n > 1:
            idx = np.arange(n)
            cnt = np.minimum(idx + hi, n - 1) - np.maximum(idx + lo, 0) + 1
        else:
            cnt = np.ones(n, dtype=np.int64)
        per_axis.append(cnt.astype(np.float64))
    cx, cy, cz = per_axis
    return cx[:, None, None] * cy[None, :, None] * cz[None, None, :]


# ---------------------------------------------------------------------------
# Edge-clamped separable convolution and its exact adjoint.
# ---------------------------------------------------------------------------


def conv1d_clamped(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Convolve along ``axis`` with nearest-edge (clamp) boundary handling."""
    if arr.shape[axis] == 1:
        return arr * kernel.sum()
    return ndimage.convolve1d(arr, kernel, axis=axis, mode="nearest")


def conv1d_clamped_adjoint(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of :func:`conv1d_clamped` for a symmetric kernel.

    Scatters each tap to its unclipped position in an extended axis, then
    folds the out-of-range mass onto the edge voxels (which is exactly where
    clamped reads came from).
    """
    if arr.shape[axis] == 1:
        return arr * kernel.sum()
    k = kernel.size
    r_left = (k - 1) // 2
    r_right = k - 1 - r_left
    moved = np.moveaxis(arr, axis, -1)
    n = moved.shape[-1]
    ext = np.zeros(moved.shape[:-1] + (n + r_left + r_right,), dtype=arr.dtype)
    # forward read offsets are o in [-r_left, r_right] with weight kernel[r_left + o]
    for o in range(-r_left, r_right + 1):
        ext[..., o + r_left : o + r_left + n] += kernel[r_left + o] * moved
    out = ext[..., r_left : r_left + n].copy()
    if r_left:
        out[..., 0] += ext[..., :r_left].sum(axis=-1)
    if r_right:
        out[..., n - 1] += ext[..., r_left + n :].sum(axis=-1)
    return np.moveaxis(out, -1, axis)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_clamped(arr: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    out = arr
    for ax in range(3):
        out = conv1d_clamped(out, k, ax)
    return out


def gaussian_clamped_adjoint(arr: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    out = arr
    for ax in range(2, -1, -1):
        out = conv1d_clamped_adjoint(out, k, ax)
    return out


# ---------------------------------------------------------------------------
# Clamped finite-difference stencils (and adjoints) used by the filter bank.
# ---------------------------------------------------------------------------


def _scatter_shift_up(v: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of reading ``f[clip(i+1)]``: out[j] = sum of v at i with clip(i+1)=j."""
    out = np.zeros_like(v)
    moved_v = np.moveaxis(v, axis, 0)
    moved_o = np.moveaxis(out, axis, 0)
    moved_o[1:] += moved_v[:-1]
    moved_o[-1] += moved_v[-1]
    return out


def _scatter_shift_down(v: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of reading ``f[clip(i-1)]``."""
    out = np.zeros_like(v)
    moved_v = np.moveaxis(v, axis, 0)
    moved_o = np.moveaxis(out, axis, 0)
    moved_o[:-1] += moved_v[1:]
    moved_o[0] += moved_v[0]
    return out


def _read_shift(arr: np.ndarray, axis: int, step: int) -> np.ndarray:
    idx = np.clip(np.arange(arr.shape[axis]) + step, 0, arr.shape[axis] - 1)
    return np.take(arr, idx, axis=axis)


def central_diff(arr: np.ndarray, axis: int) -> np.ndarray:
    """0.5 * (f[clip(i+1)] - f[clip(i-1)]); zero on singleton axes."""
    if arr.shape[axis] == 1:
        return np.zeros_like(arr)
    return 0.5 * (_read_shift(arr, axis, 1) - _read_shift(arr, axis, -1))


def central_diff_adjoint(arr: np.ndarray, axis: int) -> np.ndarray:
    if arr.shape[axis] == 1:
        return np.zeros_like(arr)
    return 0.5 * (_scatter_shift_up(arr, axis) - _scatter_shift_down(arr, axis))


def laplacian(arr: np.ndarray) -> np.ndarray:
    """Sum over axes of f[clip(i+1)] - 2 f + f[clip(i-1)]; singleton axes skip."""
    out = np.zeros_like(arr)
    for ax in range(3):
        if arr.shape[ax] > 1:
            out += _read_shift(arr, ax, 1) - 2.0 * arr + _read_shift(arr, ax, -1)
    return out


def laplacian_adjoint(arr: np.ndarray) -> np.ndarray:
    out = np.zeros_like(arr)
    for ax in range(3):
        if arr.shape[ax] > 1:
            out += _scatter_shift_up(arr, ax) - 2.0 * arr + _scatter_shift_down(arr, ax)
    return out
