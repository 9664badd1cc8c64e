"""Pairwise deformable registration by direct optimization of a dense
displacement field.

The loss combines windowed squared correlation of the warped atlas against
the target, an optional content-consistency term computed on filter-bank
features, a smoothness regularizer on the field, and an optional weak term
tying warped atlas label probabilities to a fixed pseudo mask. Gradients
are fully analytic (chain rule through the interpolation stencil, window
statistics, filter bank, and soft Dice). Optimization is coarse-to-fine
gradient descent with max-norm-normalized steps and a keep-best snapshot;
the returned field never scores worse than the zero-field initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import fcc_value_and_grad, features_forward, features_backward
from .fields import (
    DimensionMismatchError,
    DisplacementField,
    LabelMap,
    ProbMask,
    SampleStencil,
    ScalarField,
)
from .metrics import (
    NlccConfig,
    nlcc_value_and_grad,
    smoothness_value_and_grad,
    soft_dice_value_and_grad,
)


class RegistrationDivergence(RuntimeError):
    """Loss became non-finite; message carries level/step diagnostics."""


@dataclass
class RegConfig:
    lambda_smooth: float = 1.0
    levels: int = 3
    steps_per_level: int = 200
    step_size: float = 0.5
    nlcc: NlccConfig = field(default_factory=NlccConfig)
    use_fcc: bool = True
    weak_weight: float = 1.0

    def __post_init__(self):
        if self.lambda_smooth < 0:
            raise ValueError("RegConfig.lambda_smooth must be >= 0")
        if self.steps_per_level < 1:
            raise ValueError("RegConfig.steps_per_level must be >= 1")
        if self.step_size <= 0:
            raise ValueError("RegConfig.step_size must be > 0")
        if self.levels < 1:
            raise ValueError("RegConfig.levels must be >= 1")


@dataclass(frozen=True)
class WeakSupervision:
    """Fixed soft targets for re-registration: atlas labels + pseudo mask."""

    atlas_labels: LabelMap
    pseudo: ProbMask


@dataclass(frozen=True)
class RegResult:
    disp: DisplacementField
    loss_trace: list[float]
    final_terms: dict[str, float]


# ---------------------------------------------------------------------------
# Resolution pyramid helpers.
# ---------------------------------------------------------------------------


def _down_axis(arr: np.ndarray, ax: int) -> np.ndarray:
    n = arr.shape[ax]
    if n == 1:
        return arr
    moved = np.moveaxis(arr, ax, 0)
    even = moved[0::2]
    odd = moved[1::2]
    pairs = 0.5 * (even[: odd.shape[0]] + odd)
    if even.shape[0] > odd.shape[0]:  # odd length: last sample stands alone
        pairs = np.concatenate([pairs, even[-1:]], axis=0)
    return np.moveaxis(pairs, 0, ax)


def downsample2(arr: np.ndarray) -> np.ndarray:
    """Box-filter downsample by 2 along each spatial axis (channels kept)."""
    out = arr
    for ax in range(3):
        out = _down_axis(out, ax)
    return out


def _up_axis(arr: np.ndarray, ax: int, n_fine: int) -> np.ndarray:
    n = arr.shape[ax]
    if n_fine == n:
        return arr
    # coarse sample i sits at fine coordinate 2i + 0.5 (block center)
    pos = np.clip((np.arange(n_fine) + 0.5) / 2.0 - 0.5, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(pos).astype(np.int64), max(n - 2, 0))
    frac = pos - i0
    lo = np.take(arr, i0, axis=ax)
    hi = np.take(arr, np.minimum(i0 + 1, n - 1), axis=ax)
    shape = [1] * arr.ndim
    shape[ax] = n_fine
    f = frac.reshape(shape)
    return lo * (1.0 - f) + hi * f


def upsample_disp(vec: np.ndarray, fine_dims) -> np.ndarray:
    """Linearly upsample a displacement field and double its voxel values."""
    out = vec
    for ax in range(3):
        out = _up_axis(out, ax, fine_dims[ax])
    return out * 2.0


def _pyramid(arr: np.ndarray, levels: int) -> list[np.ndarray]:
    """arr at halvings 0..levels-1 (index = number of halvings)."""
    out = [arr]
    for _ in range(1, levels):
        out.append(downsample2(out[-1]))
    return out


# ---------------------------------------------------------------------------
# Loss evaluation.
# ---------------------------------------------------------------------------


@dataclass
class _LevelData:
    atlas: np.ndarray
    target: np.ndarray
    target_feats: np.ndarray | None
    onehot: np.ndarray | None
    pseudo: np.ndarray | None
    window_n: int
    epsilon: float
    lambda_smooth: float
    use_fcc: bool
    weak_weight: float


def _evaluate(disp: np.ndarray, lv: _LevelData):
    stencil = SampleStencil(lv.atlas.shape[:3], disp)
    warped = stencil.apply(lv.atlas)

    ic_vals, ic_grad = nlcc_value_and_grad(warped, lv.target, lv.window_n, lv.epsilon)
    l_ic = -float(ic_vals)
    grad_warped = -ic_grad

    l_fc = 0.0
    if lv.use_fcc:
        feats_w, cache = features_forward(warped)
        l_fc, gfeat = fcc_value_and_grad(feats_w, lv.target_feats, NlccConfig(lv.window_n, lv.epsilon))
        grad_warped = grad_warped + features_backward(cache, gfeat)

    l_smo, smo_grad = smoothness_value_and_grad(disp)

    grad = stencil.backprop_disp(lv.atlas, grad_warped)
    grad += lv.lambda_smooth * smo_grad

    l_weak = 0.0
    if lv.onehot is not None:
        warped_oh = stencil.apply(lv.onehot)
        l_weak, dpred = soft_dice_value_and_grad(warped_oh, lv.pseudo)
        grad += lv.weak_weight * stencil.backprop_disp(lv.onehot, dpred)

    loss = l_ic + l_fc + lv.lambda_smooth * l_smo + lv.weak_weight * l_weak
    terms = {"l_ic": l_ic, "l_fc": l_fc, "l_smo": l_smo, "l_weak": l_weak}
    return loss, grad, terms


def _level_window(window_n: int, halvings: int) -> int:
    return max(2, window_n >> halvings)


def _check_pair(atlas: ScalarField, target: ScalarField, weak: WeakSupervision | None):
    if atlas.dims != target.dims:
        raise DimensionMismatchError("register: atlas vs target", atlas.dims, target.dims)
    if weak is not None:
        if weak.atlas_labels.dims != atlas.dims:
            raise DimensionMismatchError(
                "register: atlas labels vs atlas", weak.atlas_labels.dims, atlas.dims
            )
        if weak.pseudo.dims != atlas.dims:
            raise DimensionMismatchError("register: pseudo vs atlas", weak.pseudo.dims, atlas.dims)
        if weak.pseudo.num_classes != weak.atlas_labels.num_classes:
            raise ValueError("register: pseudo/label class counts differ")


def _make_level(atlas, target, onehot, pseudo, cfg: RegConfig, halvings: int) -> _LevelData:
    feats = features_forward(target)[0] if cfg.use_fcc else None
    return _LevelData(
        atlas=atlas,
        target=target,
        target_feats=feats,
        onehot=onehot,
        pseudo=pseudo,
        window_n=_level_window(cfg.nlcc.window_n, halvings),
        epsilon=cfg.nlcc.epsilon,
        lambda_smooth=cfg.lambda_smooth,
        use_fcc=cfg.use_fcc,
        weak_weight=cfg.weak_weight,
    )


def reg_loss(
    disp: DisplacementField,
    atlas: ScalarField,
    target: ScalarField,
    cfg: RegConfig,
    weak: WeakSupervision | None = None,
) -> tuple[float, DisplacementField]:
    """Registration loss at ``disp`` and its analytic gradient field."""
    _check_pair(atlas, target, weak)
    if disp.dims != atlas.dims:
        raise DimensionMismatchError("reg_loss: disp vs atlas", disp.dims, atlas.dims)
    onehot = weak.atlas_labels.one_hot() if weak is not None else None
    pseudo = weak.pseudo.probs if weak is not None else None
    lv = _make_level(atlas.data, target.data, onehot, pseudo, cfg, halvings=0)
    loss, grad, _ = _evaluate(disp.vectors, lv)
    if not np.isfinite(loss):
        raise RegistrationDivergence(f"reg_loss: non-finite loss {loss}")
    return loss, DisplacementField(grad)


def reg_loss_terms(
    disp: DisplacementField,
    atlas: ScalarField,
    target: ScalarField,
    cfg: RegConfig,
    weak: WeakSupervision | None = None,
) -> dict[str, float]:
    """The individual loss terms at ``disp`` (diagnostics)."""
    _check_pair(atlas, target, weak)
    onehot = weak.atlas_labels.one_hot() if weak is not None else None
    pseudo = weak.pseudo.probs if weak is not None else None
    lv = _make_level(atlas.data, target.data, onehot, pseudo, cfg, halvings=0)
    return _evaluate(disp.vectors, lv)[2]


def register(
    atlas: ScalarField,
    target: ScalarField,
    cfg: RegConfig,
    weak: WeakSupervision | None = None,
) -> RegResult:
    """Coarse-to-fine optimization of the displacement field.

    Each level runs ``steps_per_level`` normalized gradient-descent steps with
    a keep-best snapshot; the field is upsampled (values doubled) to seed the
    next finer level. If the final field scores worse than the zero field at
    full resolution, the zero field wins.
    """
    _check_pair(atlas, target, weak)
    cfg_levels = int(cfg.levels)
    onehot0 = weak.atlas_labels.one_hot() if weak is not None else None
    pseudo0 = weak.pseudo.probs if weak is not None else None

    atlases = _pyramid(atlas.data, cfg_levels)
    targets = _pyramid(target.data, cfg_levels)
    onehots = _pyramid(onehot0, cfg_levels) if onehot0 is not None else [None] * cfg_levels
    pseudos = _pyramid(pseudo0, cfg_levels) if pseudo0 is not None else [None] * cfg_levels

    full_level = _make_level(atlases[0], targets[0], onehots[0], pseudos[0], cfg, 0)
    zero_disp = np.zeros(atlas.dims + (3,))
    init_loss, _, init_terms = _evaluate(zero_disp, full_level)
    trace = [init_loss]

    disp = np.zeros(atlases[cfg_levels - 1].shape[:3] + (3,))
    for halvings in range(cfg_levels - 1, -1, -1):
        lv = (
            full_level
            if halvings == 0
            else _make_level(atlases[halvings], targets[halvings], onehots[halvings],
                             pseudos[halvings], cfg, halvings)
        )
        best_loss = np.inf
        best_disp = disp
        for step in range(cfg.steps_per_level):
            loss, grad, _ = _evaluate(disp, lv)
            if not np.isfinite(loss):
                raise RegistrationDivergence(
                    f"register: non-finite loss at halvings={halvings} step={step}"
                )
            trace.append(loss)
            if loss < best_loss:
                best_loss = loss
                best_disp = disp
            scale = np.abs(grad).max()
            if scale == 0.0:
                break
            disp = disp - (cfg.step_size / scale) * grad
        # consider the very last iterate too
        loss, _, _ = _evaluate(disp, lv)
        trace.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_disp = disp
        disp = best_disp
        if halvings > 0:
            disp = upsample_disp(disp, atlases[halvings - 1].shape[:3])

    final_loss, _, final_terms = _evaluate(disp, full_level)
    if final_loss > init_loss:  # keep-best against the zero-field start
        disp = zero_disp
        final_loss, final_terms = init_loss, init_terms
    trace.append(final_loss)
    return RegResult(DisplacementField(disp), trace, final_terms)
