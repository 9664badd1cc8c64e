"""Scratch: profile segmenter step cost and inspect gradient scales."""
import cProfile
import pstats
import time

import numpy as np

from oneseg import PhantomConfig, TrainConfig, synth_dataset
from oneseg.segmenter import init_model, loss_and_param_grads, _forward_arrays

cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4)
ds = synth_dataset(0, cfg_ph, n_unlabeled=4, n_test=4)
img = ds.unlabeled[0]
lab = ds.unlabeled_labels[0]
onehot = lab.one_hot()

rng = np.random.default_rng(0)
model = init_model(rng, 4, img.dims, hidden=16)

t0 = time.time()
for _ in range(20):
    loss, grads = loss_and_param_grads(model, img.data, onehot)
print(f"loss_and_param_grads: {(time.time()-t0)/20*1000:.2f} ms/call")

t0 = time.time()
for _ in range(20):
    probs, _ = _forward_arrays(model, img.data)
print(f"forward only:         {(time.time()-t0)/20*1000:.2f} ms/call")

print("loss:", loss)
for k, g in grads.items():
    p = getattr(model, k)
    print(f"  {k}: |g|_rms={np.sqrt((g*g).mean()):.3e} |p|_rms={np.sqrt((p*p).mean()):.3e}")

pr = cProfile.Profile()
pr.enable()
for _ in range(10):
    loss_and_param_grads(model, img.data, onehot)
pr.disable()
stats = pstats.Stats(pr)
stats.sort_stats("cumulative").print_stats(12)
