"""Pattern-independent feature extraction for the content-consistency loss.

A fixed multi-scale filter bank stands in for a learned perceptual model:
at each scale sigma in {1, 2, 4} voxels the image is Gaussian smoothed
(separable, radius ceil(3*sigma), edge clamp), then the smoothed response,
its gradient magnitude, and its Laplacian are each z-score normalized over
a local n=8 window. Nine channels total, all at the input grid size, fully
deterministic. Local normalization removes intensity offset and positive
scale, which is what makes the channels content- rather than style-driven.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField
from .metrics import NlccConfig, nlcc_value_and_grad
from .windows import (
    box_sum,
    box_sum_adjoint,
    central_diff,
    central_diff_adjoint,
    gaussian_clamped,
    gaussian_clamped_adjoint,
    laplacian,
    laplacian_adjoint,
    window_counts,
    window_offsets,
)

SIGMAS = (1.0, 2.0, 4.0)
ZSCORE_WINDOW = 8
# variance floor relative to the channel's global scale: windows flatter than
# this fraction of the overall contrast normalize to ~0 instead of amplifying
# numerical noise. All guards scale with the image, keeping the channels
# invariant to intensity shift and positive rescaling.
_REL_FLOOR = 1e-3
_MEAN_FLOOR = 1e-5
_TINY = 1e-30
_MAG_EPS = 1e-6


@dataclass(frozen=True)
class FeatureStack:
    """C feature volumes at the original grid dims, shape (W, H, D, C)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[-1] < 1:
            raise ValueError(f"FeatureStack.data: expected (W,H,D,C), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("FeatureStack.data: non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape[:3])

    @property
    def num_channels(self) -> int:
        return int(self.data.shape[-1])


def _zscore_forward(stack: np.ndarray, cnt: np.ndarray, lo: int, hi: int):
    mu = box_sum(stack, lo, hi) / cnt
    var = np.maximum(box_sum(stack * stack, lo, hi) / cnt - mu * mu, 0.0)
    gmean = stack.mean(axis=(0, 1, 2), keepdims=True)
    gms = (stack * stack).mean(axis=(0, 1, 2), keepdims=True)
    gvar = np.maximum(gms - gmean * gmean, 0.0)
    # channel scale: global variance, floored by the mean level so constant
    # channels map to exact zeros instead of amplified rounding noise
    scale2 = gvar + _MEAN_FLOOR * _MEAN_FLOOR * gms
    inv = 1.0 / np.sqrt(var + _REL_FLOOR * _REL_FLOOR * scale2 + _TINY)
    z = (stack - mu) * inv
    return z, (stack, mu, inv, gmean)


def _zscore_backward(cache, grad_z: np.ndarray, cnt: np.ndarray, lo: int, hi: int):
    f, mu, inv, gmean = cache
    adj = lambda t: box_sum_adjoint(t, lo, hi)
    q = grad_z * (f - mu) * (-0.5) * inv**3  # dL/d var (per window)
    n_vox = f.shape[0] * f.shape[1] * f.shape[2]
    c2 = _REL_FLOOR * _REL_FLOOR
    m2 = _MEAN_FLOOR * _MEAN_FLOOR
    dscale2 = c2 * q.sum(axis=(0, 1, 2), keepdims=True)  # dL/d scale2
    # scale2 = mean(f^2) - mean(f)^2 + m2 * mean(f^2)
    dglobal = dscale2 * (2.0 * (f - gmean) + m2 * 2.0 * f) / n_vox
    return (
        grad_z * inv
        - adj(grad_z * inv / cnt)
        + 2.0 * f * adj(q / cnt)
        - 2.0 * adj(q * mu / cnt)
        + dglobal
    )


def features_forward(arr: np.ndarray):
    """Filter bank on a raw (W,H,D) array; returns (features, cache)."""
    lo, hi = window_offsets(ZSCORE_WINDOW)
    cnt = window_counts(arr.shape, lo, hi)[..., None]
    channels = []
    caches = []
    for sigma in SIGMAS:
        g = gaussian_clamped(arr, sigma)
        d = [central_diff(g, ax) for ax in range(3)]
        sq = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        # smoothing epsilon for the sqrt, relative to the image contrast
        gmean = g.mean()
        gvar = max(float((g * g).mean() - gmean * gmean), 0.0)
        mag = np.sqrt(sq + _MAG_EPS * _MAG_EPS * gvar + _TINY)
        lap = laplacian(g)
        stack = np.stack([g, mag, lap], axis=-1)
        z, zcache = _zscore_forward(stack, cnt, lo, hi)
        channels.append(z)
        caches.append((g, gmean, d, mag, zcache))
    feats = np.concatenate(channels, axis=-1)
    return feats, (caches, cnt, (lo, hi))


def features_backward(cache, grad_feats: np.ndarray) -> np.ndarray:
    """Exact chain rule of the filter bank back to the input array."""
    caches, cnt, (lo, hi) = cache
    grad_img = np.zeros(grad_feats.shape[:3])
    n_vox = grad_img.size
    for i, sigma in enumerate(SIGMAS):
        g, gmean, d, mag, zcache = caches[i]
        gz = grad_feats[..., 3 * i : 3 * i + 3]
        gstack = _zscore_backward(zcache, gz, cnt, lo, hi)
        dg = gstack[..., 0].copy()
        gmag = gstack[..., 1]
        for ax in range(3):
            dg += central_diff_adjoint(gmag * d[ax] / mag, ax)
        # the relative sqrt-epsilon depends on g's global variance
        dgvar = float((gmag / (2.0 * mag)).sum()) * _MAG_EPS * _MAG_EPS
        dg += dgvar * 2.0 * (g - gmean) / n_vox
        dg += laplacian_adjoint(gstack[..., 2])
        grad_img += gaussian_clamped_adjoint(dg, sigma)
    return grad_img


def extract_features(img: ScalarField) -> FeatureStack:
    """Deterministic 9-channel content descriptor of an image."""
    feats, _ = features_forward(img.data)
    return FeatureStack(feats)


def fcc_value_and_grad(fa: np.ndarray, fu: np.ndarray, cfg: NlccConfig):
    """Negative mean per-channel NLCC between feature stacks, with d/d fa."""
    values, grad = nlcc_value_and_grad(fa, fu, cfg.window_n, cfg.epsilon)
    n_ch = fa.shape[-1]
    return -float(values.mean()), -grad / n_ch


def fcc_loss(fa: FeatureStack, fu: FeatureStack, cfg: NlccConfig) -> float:
    """Content-consistency loss: minus the channel-mean NLCC of two stacks."""
    if fa.dims != fu.dims or fa.num_channels != fu.num_channels:
        raise ValueError(
            f"fcc_loss: stacks disagree, {fa.dims}x{fa.num_channels} vs "
            f"{fu.dims}x{fu.num_channels}"
        )
    return fcc_value_and_grad(fa.data, fu.data, cfg)[0]
