"""Scalar objectives: windowed squared correlation (NLCC), Dice overlap,
soft-Dice loss, and displacement-field smoothness.

NLCC is the mean over every voxel-centered sliding window of the squared
local correlation coefficient; windows whose variance product falls below
``epsilon`` contribute zero. The mean normalization keeps the value in
[0, 1] with self-correlation exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import DimensionMismatchError, DisplacementField, LabelMap, ProbMask, ScalarField
from .windows import box_sum, box_sum_adjoint, window_counts, window_offsets

SOFT_DICE_EPS = 1e-5


@dataclass
class NlccConfig:
    window_n: int = 8
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.window_n < 2:
            raise ValueError(f"NlccConfig.window_n must be >= 2, got {self.window_n}")
        if self.epsilon <= 0:
            raise ValueError(f"NlccConfig.epsilon must be > 0, got {self.epsilon}")


def _nlcc_channel_stats(x: np.ndarray, y: np.ndarray, n: int, eps: float):
    """Per-window quantities for (W,H,D[,C]) arrays sharing a grid."""
    lo, hi = window_offsets(n)
    cnt = window_counts(x.shape[:3], lo, hi)
    if x.ndim == 4:
        cnt = cnt[..., None]
    sx = box_sum(x, lo, hi)
    sy = box_sum(y, lo, hi)
    sxy = box_sum(x * y, lo, hi)
    sxx = box_sum(x * x, lo, hi)
    syy = box_sum(y * y, lo, hi)
    a = sxy - sx * sy / cnt
    b = np.maximum(sxx - sx * sx / cnt, 0.0)
    c = np.maximum(syy - sy * sy / cnt, 0.0)
    denom = b * c
    ok = denom >= eps
    val = np.where(ok, (a * a) / np.where(ok, denom, 1.0), 0.0)
    return val, a, b, c, denom, ok, sx / cnt, sy / cnt, cnt, (lo, hi)


def nlcc_value_channels(x: np.ndarray, y: np.ndarray, n: int, eps: float) -> np.ndarray:
    """Mean windowed squared correlation per channel. Returns shape (C,) or scalar array."""
    val = _nlcc_channel_stats(x, y, n, eps)[0]
    axes = (0, 1, 2)
    return val.sum(axis=axes) / (val.shape[0] * val.shape[1] * val.shape[2])


def nlcc_value_and_grad(x: np.ndarray, y: np.ndarray, n: int, eps: float):
    """Per-channel NLCC values and the gradient with respect to ``x``.

    Gradient shape equals ``x``; each channel is independent.
    """
    val, a, b, c, denom, ok, xbar, ybar, cnt, (lo, hi) = _nlcc_channel_stats(x, y, n, eps)
    n_windows = val.shape[0] * val.shape[1] * val.shape[2]
    values = val.sum(axis=(0, 1, 2)) / n_windows
    alpha = np.where(ok, 2.0 * a / np.where(ok, denom, 1.0), 0.0)
    gamma = np.where(ok, -2.0 * val / np.where(ok, b, 1.0), 0.0)
    adj = lambda t: box_sum_adjoint(t, lo, hi)
    grad = (
        y * adj(alpha) - adj(alpha * ybar) + x * adj(gamma) - adj(gamma * xbar)
    ) / n_windows
    return values, grad


def nlcc_info(x: ScalarField, y: ScalarField, cfg: NlccConfig) -> tuple[float, bool]:
    """NLCC value plus a degeneracy flag (True when every window was guarded)."""
    if x.dims != y.dims:
        raise DimensionMismatchError("nlcc", x.dims, y.dims)
    val, *_rest = _nlcc_channel_stats(x.data, y.data, cfg.window_n, cfg.epsilon)
    ok = _rest[4]
    value = float(val.sum() / val.size)
    return value, not bool(ok.any())


def nlcc(x: ScalarField, y: ScalarField, cfg: NlccConfig) -> float:
    """Mean windowed squared correlation; symmetric and in [0, 1]."""
    return nlcc_info(x, y, cfg)[0]


@dataclass(frozen=True)
class DiceResult:
    per_class: dict[int, float]
    mean: float


def dice(a: LabelMap, b: LabelMap) -> DiceResult:
    """Per-foreground-class Dice overlap 2|A∩B|/(|A|+|B|) and their mean.

    Background (class 0) is excluded from the mean. A class absent from both
    maps scores 1 (vacuous agreement); absent from exactly one scores 0.
    """
    if a.dims != b.dims:
        raise DimensionMismatchError("dice", a.dims, b.dims)
    if a.num_classes != b.num_classes:
        raise ValueError(
            f"dice: class counts differ ({a.num_classes} vs {b.num_classes})"
        )
    k = a.num_classes
    per_class: dict[int, float] = {}
    for c in range(1, k):
        in_a = a.labels == c
        in_b = b.labels == c
        na = int(in_a.sum())
        nb = int(in_b.sum())
        if na == 0 and nb == 0:
            per_class[c] = 1.0
        else:
            per_class[c] = 2.0 * int((in_a & in_b).sum()) / (na + nb)
    mean = float(np.mean(list(per_class.values())))
    return DiceResult(per_class, mean)


def soft_dice_value_and_grad(pred: np.ndarray, target: np.ndarray):
    """Soft-Dice loss over foreground channels of (..., K) arrays, plus d/d pred."""
    k = pred.shape[-1]
    axes = tuple(range(pred.ndim - 1))
    inter = (pred * target).sum(axis=axes)
    ps = pred.sum(axis=axes)
    ts = target.sum(axis=axes)
    num = 2.0 * inter + SOFT_DICE_EPS
    den = ps + ts + SOFT_DICE_EPS
    d = num / den
    fg = slice(1, k)
    n_fg = k - 1
    loss = 1.0 - float(d[fg].mean())
    grad = np.zeros_like(pred)
    coeff_t = 2.0 / den[fg]
    coeff_p = num[fg] / (den[fg] * den[fg])
    grad[..., fg] = -(target[..., fg] * coeff_t - coeff_p) / n_fg
    return loss, grad


def soft_dice_loss(pred: ProbMask, target_onehot: ProbMask) -> float:
    """1 - mean foreground soft Dice between probability masks."""
    if pred.dims != target_onehot.dims:
        raise DimensionMismatchError("soft_dice_loss", pred.dims, target_onehot.dims)
    if pred.num_classes != target_onehot.num_classes:
        raise ValueError(
            "soft_dice_loss: class counts differ "
            f"({pred.num_classes} vs {target_onehot.num_classes})"
        )
    return soft_dice_value_and_grad(pred.probs, target_onehot.probs)[0]


def smoothness_value_and_grad(vec: np.ndarray):
    """Mean squared forward-difference gradient of a (W,H,D,3) field.

    The difference past the far boundary of each axis counts as zero.
    """
    n_vox = vec.shape[0] * vec.shape[1] * vec.shape[2]
    total = 0.0
    grad = np.zeros_like(vec)
    for ax in range(3):
        if vec.shape[ax] < 2:
            continue
        head = [slice(None)] * 4
        tail = [slice(None)] * 4
        head[ax] = slice(0, -1)
        tail[ax] = slice(1, None)
        diff = vec[tuple(tail)] - vec[tuple(head)]
        total += float((diff * diff).sum())
        grad[tuple(tail)] += 2.0 * diff / n_vox
        grad[tuple(head)] -= 2.0 * diff / n_vox
    return total / n_vox, grad


def smoothness(disp: DisplacementField) -> float:
    """Mean over voxels of the squared forward-difference gradient magnitude."""
    return smoothness_value_and_grad(disp.vectors)[0]
