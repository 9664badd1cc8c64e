"""Scratch: inspect IST image statistics + style strength vs learnability."""
import numpy as np

from oneseg import (
    PhantomConfig, RegConfig, TrainConfig, synth_dataset, seg_train, seg_forward,
    dice, register, warp_scalar, warp_labels, ist,
)

cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4)
ds = synth_dataset(0, cfg_ph, n_unlabeled=4, n_test=4)

# register atlas to unlabeled 0, look at IST output stats
res = register(ds.atlas, ds.unlabeled[0], RegConfig(levels=3, steps_per_level=40, use_fcc=False))
wa = warp_scalar(ds.atlas, res.disp)
for beta in (0.0, 0.5, 1.0):
    out = ist(wa, ds.unlabeled[0], beta)
    print(f"beta={beta}: ist range [{out.data.min():.3f},{out.data.max():.3f}] "
          f"mean {out.data.mean():.3f} | target range "
          f"[{ds.unlabeled[0].data.min():.3f},{ds.unlabeled[0].data.max():.3f}] "
          f"mean {ds.unlabeled[0].data.mean():.3f} | atlas mean {wa.data.mean():.3f}")

# class histograms of a trained-on-IST model
pairs = []
for i in range(4):
    r = register(ds.atlas, ds.unlabeled[i], RegConfig(levels=3, steps_per_level=40, use_fcc=False))
    w = warp_scalar(ds.atlas, r.disp)
    wl = warp_labels(ds.atlas_labels, r.disp)
    rng = np.random.default_rng(i)
    for c in range(2):
        pairs.append((ist(w, ds.unlabeled[i], float(rng.random())), wl))
model, trace = seg_train(pairs, TrainConfig(steps=600, lr=0.3, batch=2, augment=False, seed=0, loss_eval_every=50))
pred = seg_forward(model, ds.test_images[0]).argmax_labels()
print("pred class hist:", np.bincount(pred.labels.ravel(), minlength=4))
print("true class hist:", np.bincount(ds.test_labels[0].labels.ravel(), minlength=4))
print("loss", trace[0], "->", trace[-1])
print("test dice:", dice(pred, ds.test_labels[0]).mean)
