"""Shared fixtures and brute-force oracles.

The oracles here are deliberately naive (plain loops, direct formulas) so
they stay independent of the implementations they check.
"""

from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_warp_linear(vol: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Loop-based trilinear warp with edge clamp; oracle for warp_scalar."""
    w, h, d = vol.shape
    out = np.zeros_like(vol, dtype=np.float64)
    for x in range(w):
        for y in range(h):
            for z in range(d):
                px = min(max(x + disp[x, y, z, 0], 0.0), w - 1.0)
                py = min(max(y + disp[x, y, z, 1], 0.0), h - 1.0)
                pz = min(max(z + disp[x, y, z, 2], 0.0), d - 1.0)
                x0 = min(int(np.floor(px)), max(w - 2, 0))
                y0 = min(int(np.floor(py)), max(h - 2, 0))
                z0 = min(int(np.floor(pz)), max(d - 2, 0))
                x1, y1, z1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1), min(z0 + 1, d - 1)
                fx, fy, fz = px - x0, py - y0, pz - z0
                acc = 0.0
                for bx, wx in ((0, 1 - fx), (1, fx)):
                    for by, wy in ((0, 1 - fy), (1, fy)):
                        for bz, wz in ((0, 1 - fz), (1, fz)):
                            xx = x1 if bx else x0
                            yy = y1 if by else y0
                            zz = z1 if bz else z0
                            acc += wx * wy * wz * vol[xx, yy, zz]
                out[x, y, z] = acc
    return out


def naive_nn_warp_labels(labels: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Nearest-neighbor label warp; agrees with one-hot warp on integer fields."""
    w, h, d = labels.shape
    out = np.zeros_like(labels)
    for x in range(w):
        for y in range(h):
            for z in range(d):
                px = int(round(min(max(x + disp[x, y, z, 0], 0.0), w - 1.0)))
                py = int(round(min(max(y + disp[x, y, z, 1], 0.0), h - 1.0)))
                pz = int(round(min(max(z + disp[x, y, z, 2], 0.0), d - 1.0)))
                out[x, y, z] = labels[px, py, pz]
    return out


def naive_nlcc(x: np.ndarray, y: np.ndarray, n: int, eps: float) -> float:
    """Direct sliding-window squared correlation, mean over all windows."""
    w, h, d = x.shape
    lo, hi = -((n - 1) // 2), n // 2
    total = 0.0
    count = 0
    for cx in range(w):
        for cy in range(h):
            for cz in range(d):
                xs = slice(max(cx + lo, 0), min(cx + hi, w - 1) + 1) if w > 1 else slice(0, 1)
                ys = slice(max(cy + lo, 0), min(cy + hi, h - 1) + 1) if h > 1 else slice(0, 1)
                zs = slice(max(cz + lo, 0), min(cz + hi, d - 1) + 1) if d > 1 else slice(0, 1)
                xw = x[xs, ys, zs].ravel()
                yw = y[xs, ys, zs].ravel()
                xc = xw - xw.mean()
                yc = yw - yw.mean()
                num = (xc * yc).sum() ** 2
                den = (xc * xc).sum() * (yc * yc).sum()
                if den >= eps:
                    total += num / den
                count += 1
    return total / count


def naive_dft(vol: np.ndarray) -> np.ndarray:
    """O(N^2) direct DFT; oracle for the forward transform on tiny grids."""
    w, h, d = vol.shape
    out = np.zeros((w, h, d), dtype=np.complex128)
    for i in range(w):
        for j in range(h):
            for k in range(d):
                acc = 0.0 + 0.0j
                for a in range(w):
                    for b in range(h):
                        for c in range(d):
                            ang = -2.0j * np.pi * (a * i / w + b * j / h + c * k / d)
                            acc += vol[a, b, c] * np.exp(ang)
                out[i, j, k] = acc
    return out


def random_labels(rng, dims, k):
    return rng.integers(0, k, size=dims).astype(np.int32)


def onehot_of(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(labels.shape + (k,), dtype=np.float64)
    for c in range(k):
        out[..., c] = labels == c
    return out
