"""A compact trainable voxel classifier with hand-derived backprop.

Two same-padded convolutions (1 -> hidden -> classes, 3-wide kernels per
non-singleton axis) with a rectifier between and per-voxel softmax on top.
Trained by mini-batch gradient descent on the soft-Dice loss against warped
atlas labels; a keep-best snapshot guarantees the returned model is never
worse on the training set than the initialization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .fields import (
    DimensionMismatchError,
    DisplacementField,
    LabelMap,
    ProbMask,
    ScalarField,
    warp_labels,
    warp_scalar,
)
from .metrics import soft_dice_value_and_grad

MODEL_MAGIC = "SEGM1"


@dataclass
class SegModel:
    """Parameters of the two-layer convolutional softmax classifier."""

    w1: np.ndarray  # (hidden, taps * in_channels)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (classes, taps * hidden)
    b2: np.ndarray  # (classes,)
    kernel: tuple[int, int, int]
    in_channels: int = 1

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.w2.shape[0])

    def copy(self) -> "SegModel":
        return SegModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
                        self.kernel, self.in_channels)


@dataclass
class TrainConfig:
    steps: int = 300
    lr: float = 1e-2
    batch: int = 4
    augment: bool = True
    copies_per_unlabeled: int = 3
    seed: int = 0
    hidden: int = 16
    loss_eval_every: int = 25

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("TrainConfig.steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("TrainConfig.lr must be > 0")
        if self.batch < 1:
            raise ValueError("TrainConfig.batch must be >= 1")
        if self.copies_per_unlabeled < 1:
            raise ValueError("TrainConfig.copies_per_unlabeled must be >= 1")


def kernel_for_dims(dims) -> tuple[int, int, int]:
    return tuple(3 if n >= 3 else 1 for n in dims)


def init_model(rng: np.random.Generator, num_classes: int, dims,
               hidden: int = 16) -> SegModel:
    """He-scaled random kernels, zero biases."""
    k = kernel_for_dims(dims)
    taps = k[0] * k[1] * k[2]
    t1 = taps * 1
    t2 = taps * hidden
    w1 = rng.normal(0.0, np.sqrt(2.0 / t1), size=(hidden, t1))
    w2 = rng.normal(0.0, np.sqrt(2.0 / t2), size=(num_classes, t2))
    return SegModel(w1, np.zeros(hidden), w2, np.zeros(num_classes), k, 1)


def _offsets(kernel):
    offs = []
    for ox in range(-(kernel[0] // 2), kernel[0] // 2 + 1):
        for oy in range(-(kernel[1] // 2), kernel[1] // 2 + 1):
            for oz in range(-(kernel[2] // 2), kernel[2] // 2 + 1):
                offs.append((ox, oy, oz))
    return offs


def _im2col(arr: np.ndarray, kernel) -> np.ndarray:
    """(W,H,D,C) -> (N, taps*C) patches under zero padding, fixed tap order."""
    w, h, d, c = arr.shape
    rx, ry, rz = kernel[0] // 2, kernel[1] // 2, kernel[2] // 2
    padded = np.zeros((w + 2 * rx, h + 2 * ry, d + 2 * rz, c))
    padded[rx : rx + w, ry : ry + h, rz : rz + d] = arr
    cols = np.empty((w * h * d, len(_offsets(kernel)) * c))
    for t, (ox, oy, oz) in enumerate(_offsets(kernel)):
        block = padded[rx + ox : rx + ox + w, ry + oy : ry + oy + h, rz + oz : rz + oz + d]
        cols[:, t * c : (t + 1) * c] = block.reshape(-1, c)
    return cols


def _col2im(dcols: np.ndarray, dims, kernel, channels: int) -> np.ndarray:
    """Adjoint of :func:`_im2col` (zero padding folds away)."""
    w, h, d = dims
    rx, ry, rz = kernel[0] // 2, kernel[1] // 2, kernel[2] // 2
    padded = np.zeros((w + 2 * rx, h + 2 * ry, d + 2 * rz, channels))
    for t, (ox, oy, oz) in enumerate(_offsets(kernel)):
        block = dcols[:, t * channels : (t + 1) * channels].reshape(w, h, d, channels)
        padded[rx + ox : rx + ox + w, ry + oy : ry + oy + h, rz + oz : rz + oz + d] += block
    return padded[rx : rx + w, ry : ry + h, rz : rz + d]


def _forward_arrays(model: SegModel, arr: np.ndarray):
    w, h, d = arr.shape
    c1 = _im2col(arr[..., None], model.kernel)
    pre = c1 @ model.w1.T + model.b1
    act = np.maximum(pre, 0.0)
    c2 = _im2col(act.reshape(w, h, d, model.hidden), model.kernel)
    logits = c2 @ model.w2.T + model.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, (c1, pre, c2)


def seg_forward(model: SegModel, img: ScalarField) -> ProbMask:
    """Per-voxel class probabilities for an image."""
    probs, _ = _forward_arrays(model, img.data)
    w, h, d = img.dims
    return ProbMask(probs.reshape(w, h, d, model.num_classes))


def loss_and_param_grads(model: SegModel, arr: np.ndarray, target_onehot: np.ndarray):
    """Soft-Dice loss and gradients for every parameter tensor."""
    w, h, d = arr.shape
    probs, (c1, pre, c2) = _forward_arrays(model, arr)
    loss, dprobs = soft_dice_value_and_grad(probs, target_onehot.reshape(-1, model.num_classes))
    dlogits = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
    gw2 = dlogits.T @ c2
    gb2 = dlogits.sum(axis=0)
    dc2 = dlogits @ model.w2
    dact = _col2im(dc2, (w, h, d), model.kernel, model.hidden).reshape(-1, model.hidden)
    dpre = dact * (pre > 0.0)
    gw1 = dpre.T @ c1
    gb1 = dpre.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def training_loss(model: SegModel, pairs) -> float:
    """Mean soft-Dice loss over (image, labels) pairs, no augmentation."""
    total = 0.0
    for img, labels in pairs:
        probs, _ = _forward_arrays(model, img.data)
        onehot = labels.one_hot().reshape(-1, model.num_classes)
        total += soft_dice_value_and_grad(probs, onehot)[0]
    return total / len(pairs)


# ---------------------------------------------------------------------------
# Random spatial augmentation: affine composed with a jittered control grid.
# ---------------------------------------------------------------------------


@dataclass
class AugmentConfig:
    max_rotate_deg: float = 10.0
    scale_low: float = 0.9
    scale_high: float = 1.1
    max_translate: float = 3.0
    bspline_spacing: int = 8
    bspline_jitter: float = 2.0

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, 1.0, 1.0, 0.0, 8, 0.0)

    def is_identity(self) -> bool:
        return (
            self.max_rotate_deg == 0.0
            and self.scale_low == 1.0
            and self.scale_high == 1.0
            and self.max_translate == 0.0
            and self.bspline_jitter == 0.0
        )


def _rotation_matrix(rng: np.random.Generator, dims, max_deg: float) -> np.ndarray:
    limit = np.deg2rad(max_deg)
    if dims[2] == 1:
        a = rng.uniform(-limit, limit)
        ca, sa = np.cos(a), np.sin(a)
        return np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ax, ay, az = rng.uniform(-limit, limit, size=3)
    rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
    ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
    rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
    return rz @ ry @ rx


def sample_augment_disp(rng: np.random.Generator, dims, cfg: AugmentConfig) -> np.ndarray:
    """Random affine + control-grid displacement as one dense field."""
    w, h, d = dims
    mat = _rotation_matrix(rng, dims, cfg.max_rotate_deg) * rng.uniform(cfg.scale_low, cfg.scale_high)
    trans = np.array([
        rng.uniform(-cfg.max_translate, cfg.max_translate) if n > 1 else 0.0
        for n in dims
    ])
    center = (np.array(dims, dtype=np.float64) - 1.0) / 2.0
    grid = np.stack(
        np.meshgrid(np.arange(w), np.arange(h), np.arange(d), indexing="ij"), axis=-1
    ).astype(np.float64)
    rel = grid - center
    disp = rel @ mat.T + center + trans - grid

    spacing = float(cfg.bspline_spacing)
    active = [ax for ax in range(3) if dims[ax] > 1]
    ctrl_shape = tuple(int(np.ceil((dims[ax] - 1) / spacing)) + 1 for ax in active)
    ctrl_shape = tuple(max(4, n) for n in ctrl_shape)  # cubic interp needs support
    coords = [grid[..., ax].ravel() / spacing for ax in active]
    for ax in range(3):
        if dims[ax] > 1:
            ctrl = rng.uniform(-cfg.bspline_jitter, cfg.bspline_jitter, size=ctrl_shape)
            smooth = ndimage.map_coordinates(ctrl, np.stack(coords), order=3, mode="nearest")
            disp[..., ax] += smooth.reshape(w, h, d)
    return disp


def augment(
    img: ScalarField,
    labels: LabelMap,
    rng: np.random.Generator,
    cfg: AugmentConfig | None = None,
) -> tuple[ScalarField, LabelMap]:
    """Apply one random spatial transformation to an aligned image/label pair."""
    if img.dims != labels.dims:
        raise DimensionMismatchError("augment", img.dims, labels.dims)
    cfg = cfg or AugmentConfig()
    if cfg.is_identity():
        return img, labels
    disp = DisplacementField(sample_augment_disp(rng, img.dims, cfg))
    return warp_scalar(img, disp), warp_labels(labels, disp)


# ---------------------------------------------------------------------------
# Training loop.
# ---------------------------------------------------------------------------


def seg_train(
    pairs,
    cfg: TrainConfig,
    aug_cfg: AugmentConfig | None = None,
) -> tuple[SegModel, list[float]]:
    """Mini-batch gradient descent on soft Dice over aligned pairs.

    Returns the best-seen model (by full training-set loss, evaluated every
    ``loss_eval_every`` steps) and the per-step batch loss trace.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("seg_train: empty pair set")
    k = pairs[0][1].num_classes
    for img, labels in pairs:
        if labels.num_classes != k:
            raise ValueError("seg_train: inconsistent class counts")
        if img.dims != labels.dims:
            raise DimensionMismatchError("seg_train pair", img.dims, labels.dims)
    rng = np.random.default_rng(cfg.seed)
    model = init_model(rng, k, pairs[0][0].dims, hidden=cfg.hidden)

    best = model.copy()
    best_loss = training_loss(model, pairs)
    trace: list[float] = []
    onehots = [labels.one_hot() for _, labels in pairs]

    for step in range(cfg.steps):
        idx = rng.integers(0, len(pairs), size=cfg.batch)
        grads = None
        batch_loss = 0.0
        for i in idx:
            img, labels = pairs[i]
            if cfg.augment:
                img, labels = augment(img, labels, rng, aug_cfg)
                onehot = labels.one_hot()
            else:
                onehot = onehots[i]
            loss, g = loss_and_param_grads(model, img.data, onehot)
            if not np.isfinite(loss):
                raise RuntimeError(f"seg_train: non-finite loss at step {step}")
            batch_loss += loss
            if grads is None:
                grads = g
            else:
                for key in grads:
                    grads[key] += g[key]
        batch_loss /= cfg.batch
        trace.append(batch_loss)
        scale = cfg.lr / cfg.batch
        model = SegModel(
            model.w1 - scale * grads["w1"],
            model.b1 - scale * grads["b1"],
            model.w2 - scale * grads["w2"],
            model.b2 - scale * grads["b2"],
            model.kernel,
            model.in_channels,
        )
        last = step == cfg.steps - 1
        if last or (step + 1) % cfg.loss_eval_every == 0:
            full = training_loss(model, pairs)
            if full < best_loss:
                best_loss = full
                best = model.copy()
    return best, trace


# ---------------------------------------------------------------------------
# Model file format: "SEGM1" header + architecture + float32 parameters.
# ---------------------------------------------------------------------------


def save_model(model: SegModel, path) -> None:
    header = (
        f"{MODEL_MAGIC} {model.in_channels} {model.hidden} {model.num_classes} "
        f"{model.kernel[0]} {model.kernel[1]} {model.kernel[2]}\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for arr in (model.w1, model.b1, model.w2, model.b2):
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> SegModel:
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing model header line")
    parts = raw[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 7 or parts[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: bad model header {parts!r}")
    in_ch, hidden, classes, kx, ky, kz = (int(p) for p in parts[1:])
    taps = kx * ky * kz
    sizes = [hidden * taps * in_ch, hidden, classes * taps * hidden, classes]
    payload = np.frombuffer(raw[nl + 1 :], dtype="<f4")
    if payload.size != sum(sizes):
        raise ValueError(
            f"{path}: parameter payload has {payload.size} floats, expected {sum(sizes)}"
        )
    w1, b1, w2, b2 = np.split(payload.astype(np.float64), np.cumsum(sizes)[:-1])
    return SegModel(
        w1.reshape(hidden, taps * in_ch),
        b1,
        w2.reshape(classes, taps * hidden),
        b2,
        (kx, ky, kz),
        in_ch,
    )
