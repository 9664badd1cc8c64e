"""Scratch: small end-to-end pipeline + first ablation signal check."""
import time

import numpy as np

from oneseg import (
    EvalData, NlccConfig, PhantomConfig, PipelineConfig, RegConfig, TrainConfig,
    run_pipeline, synth_dataset,
)

cfg_ph = PhantomConfig(dims=(64, 64, 1), num_classes=4)
ds = synth_dataset(0, cfg_ph, n_unlabeled=4, n_test=4)
ev = EvalData(ds.test_images, ds.test_labels, ds.unlabeled_labels)

def run(use_fcc, use_ist, iterations=2, seed=0):
    cfg = PipelineConfig(
        iterations=iterations,
        reg=RegConfig(levels=3, steps_per_level=40, use_fcc=use_fcc),
        seg=TrainConfig(steps=200, lr=1e-2, batch=4, augment=True, copies_per_unlabeled=2),
        seed=seed,
        use_ist=use_ist,
    )
    t0 = time.time()
    model, reports = run_pipeline(ds.atlas, ds.atlas_labels, ds.unlabeled, cfg, ev, threads=4)
    dt = time.time() - t0
    regs = [r.reg_dice_mean for r in reports]
    segs = [r.seg_dice_mean for r in reports]
    print(f"fcc={use_fcc} ist={use_ist}: reg={regs} seg={segs}  ({dt:.1f}s)")
    return segs[-1]

t_all = time.time()
base = run(False, False)
fcc = run(True, False)
ist_only = run(False, True)
both = run(True, True)
print(f"R&S={base:.4f} Rfcc&S={fcc:.4f} R&Sist={ist_only:.4f} Rfcc&Sist={both:.4f}")
print(f"total {time.time()-t_all:.1f}s")
