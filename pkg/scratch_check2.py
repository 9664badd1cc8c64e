"""Scratch: full reg_loss gradient per term, segmenter parameter grads, small register run."""
import time

import numpy as np

from oneseg import (
    DisplacementField, LabelMap, NlccConfig, ProbMask, RegConfig, ScalarField,
    WeakSupervision, reg_loss, register, warp_scalar,
)
from oneseg.segmenter import init_model, loss_and_param_grads, _forward_arrays
from oneseg.phantom import PhantomConfig, synth_dataset
from oneseg.metrics import dice
from oneseg.fields import warp_labels

rng = np.random.default_rng(1)
h = 1e-5

dims = (10, 9, 4)
atlas = ScalarField(rng.standard_normal(dims))
target = ScalarField(rng.standard_normal(dims))
lab = LabelMap(rng.integers(0, 3, size=dims).astype(np.int32), 3)
pp = rng.uniform(0.05, 1.0, size=dims + (3,))
pp /= pp.sum(-1, keepdims=True)
pseudo = ProbMask(pp)
disp0 = rng.uniform(-0.35, 0.35, size=dims + (3,))

combos = [
    ("ic only", dict(lambda_smooth=0.0, use_fcc=False), None),
    ("ic+smo", dict(lambda_smooth=1.0, use_fcc=False), None),
    ("ic+smo+weak", dict(lambda_smooth=1.0, use_fcc=False), WeakSupervision(lab, pseudo)),
    ("ic+smo+fcc", dict(lambda_smooth=1.0, use_fcc=True), None),
    ("all", dict(lambda_smooth=1.0, use_fcc=True), WeakSupervision(lab, pseudo)),
]
for name, kw, weak in combos:
    cfg = RegConfig(levels=1, steps_per_level=1, nlcc=NlccConfig(4, 1e-5), **kw)
    loss, grad = reg_loss(DisplacementField(disp0), atlas, target, cfg, weak)
    errs = []
    for _ in range(20):
        i = tuple(rng.integers(0, s) for s in disp0.shape)
        dp = disp0.copy(); dp[i] += h
        dm = disp0.copy(); dm[i] -= h
        fp = reg_loss(DisplacementField(dp), atlas, target, cfg, weak)[0]
        fm = reg_loss(DisplacementField(dm), atlas, target, cfg, weak)[0]
        fd = (fp - fm) / (2 * h)
        denom = max(abs(fd), abs(grad.vectors[i]), 1e-8)
        errs.append(abs(fd - grad.vectors[i]) / denom)
    print(f"reg_loss [{name}] max rel err: {max(errs):.3g}")
    assert max(errs) < (1e-3 if kw["use_fcc"] else 1e-4), name

# segmenter parameter gradients vs FD on 6x6x1
img = rng.standard_normal((6, 6, 1))
model = init_model(rng, 3, (6, 6, 1), hidden=4)
model.b1[:] = rng.normal(0, 0.1, model.b1.shape)
model.b2[:] = rng.normal(0, 0.1, model.b2.shape)
lab_arr = rng.integers(0, 3, size=(6, 6, 1))
onehot = np.zeros((6, 6, 1, 3))
for c in range(3):
    onehot[..., c] = lab_arr == c
loss, grads = loss_and_param_grads(model, img, onehot)
maxerr = 0.0
for pname in ("w1", "b1", "w2", "b2"):
    p = getattr(model, pname)
    for _ in range(25):
        i = tuple(rng.integers(0, s) for s in p.shape)
        orig = p[i]
        p[i] = orig + h
        fp = loss_and_param_grads(model, img, onehot)[0]
        p[i] = orig - h
        fm = loss_and_param_grads(model, img, onehot)[0]
        p[i] = orig
        fd = (fp - fm) / (2 * h)
        denom = max(abs(fd), abs(grads[pname][i]), 1e-8)
        maxerr = max(maxerr, abs(fd - grads[pname][i]) / denom)
print(f"segmenter param grads max rel err: {maxerr:.3g}")
assert maxerr < 1e-4

# small registration recovery: 48x48 phantom, known smooth warp
from oneseg.phantom import sample_anatomy, sample_subject_disp
cfg_ph = PhantomConfig(dims=(48, 48, 1), num_classes=3)
prng = np.random.default_rng(7)
anat = sample_anatomy(prng, cfg_ph)
true_disp = DisplacementField(sample_subject_disp(prng, cfg_ph))
atlas_img = ScalarField(anat.base_image)
atlas_lab = LabelMap(anat.base_labels, 3)
target_img = warp_scalar(atlas_img, true_disp)

t0 = time.time()
rcfg = RegConfig(levels=3, steps_per_level=80, use_fcc=False)
res = register(atlas_img, target_img, rcfg)
t1 = time.time()
d1 = dice(warp_labels(atlas_lab, res.disp), warp_labels(atlas_lab, true_disp)).mean
print(f"recovery dice (no fcc): {d1:.4f} in {t1-t0:.2f}s, final loss {res.loss_trace[-1]:.4f}")

t0 = time.time()
rcfg = RegConfig(levels=3, steps_per_level=80, use_fcc=True)
res = register(atlas_img, target_img, rcfg)
t1 = time.time()
d2 = dice(warp_labels(atlas_lab, res.disp), warp_labels(atlas_lab, true_disp)).mean
print(f"recovery dice (fcc):    {d2:.4f} in {t1-t0:.2f}s, final loss {res.loss_trace[-1]:.4f}")
print("identity check:")
res0 = register(atlas_img, atlas_img, RegConfig(levels=2, steps_per_level=20, use_fcc=False))
print("  mean|disp| =", np.abs(res0.disp.vectors).mean())
