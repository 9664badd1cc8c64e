"""Scratch: what limits the segmenter? Per-class dice + full-batch training +
an intensity-threshold Bayes-style baseline."""
import time

import numpy as np

from oneseg import PhantomConfig, TrainConfig, synth_dataset, seg_train, seg_forward, dice
from oneseg.segmenter import init_model, loss_and_param_grads, training_loss, SegModel

mild = dict(gamma_log_range=0.25, contrast_jitter=0.1, brightness_jitter=0.05)
cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4, **mild)
ds = synth_dataset(0, cfg_ph, n_unlabeled=10, n_test=10)
pairs = list(zip(ds.unlabeled, ds.unlabeled_labels))

# baseline: per-image nearest-class-mean intensity classifier using TRAIN stats
means = np.zeros(4)
counts = np.zeros(4)
for img, lbl in pairs:
    for c in range(4):
        m = lbl.labels == c
        means[c] += img.data[m].sum()
        counts[c] += m.sum()
means /= counts
base_dice = []
for img, lbl in zip(ds.test_images, ds.test_labels):
    pred = np.argmin(np.abs(img.data[..., None] - means), axis=-1).astype(np.int32)
    from oneseg import LabelMap
    base_dice.append(dice(LabelMap(pred, 4), lbl).mean)
print(f"nearest-mean-intensity baseline: {np.mean(base_dice):.4f}")

# full-batch descent, long run, per-class dice every 200 steps
rng = np.random.default_rng(0)
model = init_model(rng, 4, pairs[0][0].dims, hidden=8)
onehots = [l.one_hot() for _, l in pairs]
lr = 0.5
t0 = time.time()
for step in range(3001):
    grads = None
    for (img, lbl), oh in zip(pairs, onehots):
        loss, g = loss_and_param_grads(model, img.data, oh)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    for k in grads:
        grads[k] /= len(pairs)
    model = SegModel(model.w1 - lr * grads["w1"], model.b1 - lr * grads["b1"],
                     model.w2 - lr * grads["w2"], model.b2 - lr * grads["b2"],
                     model.kernel, model.in_channels)
    if step % 500 == 0:
        full = training_loss(model, pairs)
        ds_test = [dice(seg_forward(model, img).argmax_labels(), lbl)
                   for img, lbl in zip(ds.test_images, ds.test_labels)]
        per_class = {c: np.mean([d.per_class[c] for d in ds_test]) for c in (1, 2, 3)}
        print(f"step {step}: train_loss={full:.4f} test={np.mean([d.mean for d in ds_test]):.4f} "
              f"per-class={ {c: round(v,3) for c,v in per_class.items()} } ({time.time()-t0:.0f}s)")
