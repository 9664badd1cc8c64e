"""Scratch validation of adjoints and gradients (not part of the test suite)."""
import numpy as np

from oneseg import windows as W
from oneseg.metrics import nlcc_value_and_grad, smoothness_value_and_grad, soft_dice_value_and_grad
from oneseg.features import features_forward, features_backward
from oneseg.fields import SampleStencil

rng = np.random.default_rng(0)


def dot(a, b):
    return float((a * b).sum())


# adjoint tests
for shape in [(7, 5, 3), (8, 8, 1), (5, 1, 1)]:
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    for lo, hi in [(-3, 4), (-1, 1), (0, 1)]:
        lhs = dot(W.box_sum(x, lo, hi), y)
        rhs = dot(x, W.box_sum_adjoint(y, lo, hi))
        assert abs(lhs - rhs) < 1e-9, (shape, lo, hi, lhs, rhs)
    k = W.gaussian_kernel(2.0)
    for ax in range(3):
        lhs = dot(W.conv1d_clamped(x, k, ax), y)
        rhs = dot(x, W.conv1d_clamped_adjoint(y, k, ax))
        assert abs(lhs - rhs) < 1e-9, ("conv", shape, ax, lhs, rhs)
        lhs = dot(W.central_diff(x, ax), y)
        rhs = dot(x, W.central_diff_adjoint(y, ax))
        assert abs(lhs - rhs) < 1e-9, ("cdiff", shape, ax)
    lhs = dot(W.laplacian(x), y)
    rhs = dot(x, W.laplacian_adjoint(y))
    assert abs(lhs - rhs) < 1e-9, ("lap", shape)
print("adjoints OK")

# gaussian adjoint full
x = rng.standard_normal((9, 7, 4))
y = rng.standard_normal((9, 7, 4))
lhs = dot(W.gaussian_clamped(x, 2.0), y)
rhs = dot(x, W.gaussian_clamped_adjoint(y, 2.0))
assert abs(lhs - rhs) < 1e-9
print("gaussian adjoint OK")

# NLCC self and gradient vs FD
x = rng.standard_normal((10, 9, 4))
v, _ = nlcc_value_and_grad(x, x, 4, 1e-5)
print("nlcc self:", v)
assert abs(v - 1.0) < 1e-12

y = rng.standard_normal(x.shape)
v, g = nlcc_value_and_grad(x, y, 4, 1e-5)
h = 1e-6
errs = []
for _ in range(15):
    i = tuple(rng.integers(0, s) for s in x.shape)
    xp = x.copy(); xp[i] += h
    xm = x.copy(); xm[i] -= h
    fd = (nlcc_value_and_grad(xp, y, 4, 1e-5)[0] - nlcc_value_and_grad(xm, y, 4, 1e-5)[0]) / (2 * h)
    errs.append(abs(fd - g[i]) / max(abs(fd), 1e-12))
print("nlcc grad max rel err:", max(errs))
assert max(errs) < 1e-5

# features backward vs FD
x = rng.standard_normal((8, 7, 1))
feats, cache = features_forward(x)
gout = rng.standard_normal(feats.shape)
gx = features_backward(cache, gout)
errs = []
for _ in range(12):
    i = tuple(rng.integers(0, s) for s in x.shape)
    xp = x.copy(); xp[i] += h
    xm = x.copy(); xm[i] -= h
    fp = (features_forward(xp)[0] * gout).sum()
    fm = (features_forward(xm)[0] * gout).sum()
    fd = (fp - fm) / (2 * h)
    errs.append(abs(fd - gx[i]) / max(abs(fd), 1e-9))
print("features grad max rel err:", max(errs))
assert max(errs) < 1e-4

# stencil: warp + disp gradient vs FD
img = rng.standard_normal((9, 8, 3))
disp = rng.uniform(-0.4, 0.4, size=(9, 8, 3, 3))
st = SampleStencil(img.shape, disp)
warped = st.apply(img)
gout = rng.standard_normal(warped.shape)
gd = st.backprop_disp(img, gout)
errs = []
for _ in range(20):
    i = tuple(rng.integers(0, s) for s in disp.shape)
    dp = disp.copy(); dp[i] += h
    dm = disp.copy(); dm[i] -= h
    fp = (SampleStencil(img.shape, dp).apply(img) * gout).sum()
    fm = (SampleStencil(img.shape, dm).apply(img) * gout).sum()
    fd = (fp - fm) / (2 * h)
    errs.append(abs(fd - gd[i]) / max(abs(fd), 1e-9))
print("stencil disp grad max rel err:", max(errs))
assert max(errs) < 1e-5

# smoothness grad vs FD
vec = rng.standard_normal((6, 5, 4, 3))
v, g = smoothness_value_and_grad(vec)
errs = []
for _ in range(15):
    i = tuple(rng.integers(0, s) for s in vec.shape)
    vp = vec.copy(); vp[i] += h
    vm = vec.copy(); vm[i] -= h
    fd = (smoothness_value_and_grad(vp)[0] - smoothness_value_and_grad(vm)[0]) / (2 * h)
    errs.append(abs(fd - g[i]) / max(abs(fd), 1e-12))
print("smoothness grad max rel err:", max(errs))
assert max(errs) < 1e-6

# soft dice grad vs FD
pred = rng.uniform(0.05, 1.0, size=(5, 4, 3, 4))
pred /= pred.sum(-1, keepdims=True)
tgt = np.zeros_like(pred)
lab = rng.integers(0, 4, size=(5, 4, 3))
for c in range(4):
    tgt[..., c] = lab == c
v, g = soft_dice_value_and_grad(pred, tgt)
errs = []
for _ in range(15):
    i = tuple(rng.integers(0, s) for s in pred.shape)
    pp = pred.copy(); pp[i] += h
    pm = pred.copy(); pm[i] -= h
    fd = (soft_dice_value_and_grad(pp, tgt)[0] - soft_dice_value_and_grad(pm, tgt)[0]) / (2 * h)
    errs.append(abs(fd - g[i]) / max(abs(fd), 1e-12))
print("soft dice grad max rel err:", max(errs))
assert max(errs) < 1e-6

print("ALL SCRATCH CHECKS PASS")
