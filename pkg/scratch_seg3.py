"""Scratch: GT-pair learnability ceiling under normalization + milder styles."""
import time

import numpy as np

from oneseg import PhantomConfig, ScalarField, TrainConfig, synth_dataset, seg_train, seg_forward, dice


def standardize(img):
    d = img.data
    return ScalarField((d - d.mean()) / (d.std() + 1e-12))


def ceiling(style_kw, norm, hidden, steps, lr, batch, n=10, seeds=(0,)):
    cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4, **style_kw)
    vals = []
    t0 = time.time()
    for seed in seeds:
        ds = synth_dataset(seed, cfg_ph, n_unlabeled=n, n_test=10)
        unl = [standardize(u) if norm else u for u in ds.unlabeled]
        tst = [standardize(t) if norm else t for t in ds.test_images]
        pairs = list(zip(unl, ds.unlabeled_labels))
        cfg = TrainConfig(steps=steps, lr=lr, batch=batch, augment=False, seed=seed,
                          hidden=hidden, loss_eval_every=50)
        model, trace = seg_train(pairs, cfg)
        d = np.mean([dice(seg_forward(model, img).argmax_labels(), lbl).mean
                     for img, lbl in zip(tst, ds.test_labels)])
        vals.append(d)
    dt = (time.time() - t0) / len(seeds)
    print(f"norm={norm} h={hidden} steps={steps} lr={lr} b={batch} {style_kw or 'default-style'}: "
          f"dice={np.mean(vals):.4f} ({dt:.0f}s/train)")
    return np.mean(vals)


mild = dict(gamma_log_range=0.25, contrast_jitter=0.1, brightness_jitter=0.05)
ceiling({}, False, 16, 600, 0.3, 2)
ceiling({}, True, 16, 600, 0.3, 2)
ceiling(mild, True, 16, 600, 0.3, 2)
ceiling(mild, True, 8, 600, 0.3, 2)
ceiling(mild, True, 8, 600, 0.6, 2)
ceiling(mild, True, 8, 1200, 0.3, 2)
ceiling(mild, True, 8, 1200, 0.6, 2)
