"""Scratch: debug segmenter training quality on aligned phantom pairs."""
import time

import numpy as np

from oneseg import PhantomConfig, TrainConfig, synth_dataset, seg_train, seg_forward, dice
from oneseg.segmenter import training_loss

cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4)
ds = synth_dataset(0, cfg_ph, n_unlabeled=4, n_test=4)

# train directly on ground-truth-aligned pairs (best case)
pairs = list(zip(ds.unlabeled, ds.unlabeled_labels))

for lr in (1e-2, 1e-1, 3e-1, 1.0):
    cfg = TrainConfig(steps=300, lr=lr, batch=4, augment=False, seed=0)
    t0 = time.time()
    model, trace = seg_train(pairs, cfg)
    dt = time.time() - t0
    test_d = np.mean([
        dice(seg_forward(model, img).argmax_labels(), lbl).mean
        for img, lbl in zip(ds.test_images, ds.test_labels)
    ])
    print(f"lr={lr}: loss {trace[0]:.4f} -> {trace[-1]:.4f} "
          f"(full {training_loss(model, pairs):.4f}) test_dice={test_d:.4f} ({dt:.1f}s)")
