"""Scratch: efficient frontier for seg training (batch/lr/steps/hidden/augment)."""
import time

import numpy as np

from oneseg import PhantomConfig, TrainConfig, synth_dataset, seg_train, seg_forward, dice

mild = dict(gamma_log_range=0.25, contrast_jitter=0.1, brightness_jitter=0.05)
cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4, **mild)
ds = synth_dataset(0, cfg_ph, n_unlabeled=10, n_test=10)
pairs = list(zip(ds.unlabeled, ds.unlabeled_labels))


def run(steps, lr, batch, hidden, aug, seed=0):
    cfg = TrainConfig(steps=steps, lr=lr, batch=batch, augment=aug, seed=seed,
                      hidden=hidden, loss_eval_every=50)
    t0 = time.time()
    model, trace = seg_train(pairs, cfg)
    dt = time.time() - t0
    d = np.mean([dice(seg_forward(model, img).argmax_labels(), lbl).mean
                 for img, lbl in zip(ds.test_images, ds.test_labels)])
    print(f"steps={steps} lr={lr} b={batch} h={hidden} aug={aug}: dice={d:.4f} ({dt:.0f}s)")
    return d, dt


run(300, 0.5, 10, 8, False)
run(300, 0.5, 10, 8, True)
run(300, 1.0, 10, 8, False)
run(500, 0.5, 10, 8, False)
run(300, 0.5, 10, 16, False)
run(600, 0.5, 6, 8, False)
run(300, 0.3, 10, 8, False)
