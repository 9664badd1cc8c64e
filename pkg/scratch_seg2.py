"""Scratch: segmenter saturation study — steps/lr/hidden on aligned GT pairs."""
import time

import numpy as np

from oneseg import PhantomConfig, TrainConfig, synth_dataset, seg_train, seg_forward, dice

cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4)
ds = synth_dataset(0, cfg_ph, n_unlabeled=4, n_test=4)
pairs = list(zip(ds.unlabeled, ds.unlabeled_labels))

def test_dice(model):
    return float(np.mean([
        dice(seg_forward(model, img).argmax_labels(), lbl).mean
        for img, lbl in zip(ds.test_images, ds.test_labels)
    ]))

for hidden in (16,):
    for steps, lr, batch in [(1000, 0.3, 2), (2000, 0.3, 2), (2000, 0.6, 2), (4000, 0.3, 2), (2000, 1.0, 4)]:
        cfg = TrainConfig(steps=steps, lr=lr, batch=batch, augment=False, seed=0,
                          hidden=hidden, loss_eval_every=100)
        t0 = time.time()
        model, trace = seg_train(pairs, cfg)
        dt = time.time() - t0
        print(f"h={hidden} steps={steps} lr={lr} batch={batch}: "
              f"loss {trace[0]:.3f}->{trace[-1]:.3f} test={test_dice(model):.4f} ({dt:.0f}s)")
