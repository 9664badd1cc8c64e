"""Command-line interface.

Subcommands cover the whole workflow: ``synth`` materializes a phantom
dataset, ``register``/``ist``/``features`` expose the individual
operations, ``seg-train``/``seg-predict`` drive the segmenter, ``eval``
scores predictions, and ``pipeline`` runs the full iterative loop. Every
command exits 0 only on full success.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fvol
from .config import (
    ConfigError,
    ManifestError,
    dump_config,
    load_config,
    load_dataset,
    load_manifest,
    load_pairs_manifest,
)
from .features import extract_features
from .fields import LabelMap, ProbMask, ScalarField
from .metrics import dice
from .phantom import PhantomConfig, synth_dataset
from .pipeline import (
    EvalData,
    PipelineConfig,
    report_to_rows,
    REPORT_COLUMNS,
    run_pipeline,
)
from .registration import RegConfig, WeakSupervision, register
from .segmenter import TrainConfig, load_model, save_model, seg_forward, seg_train
from .spectral import ist, sample_beta
from .visualize import emit_slice_png

log = logging.getLogger("oneseg")


@dataclasses.dataclass
class SynthConfig:
    phantom: PhantomConfig = dataclasses.field(default_factory=PhantomConfig)
    n_labeled: int = 1
    n_unlabeled: int = 10
    n_test: int = 10

    def __post_init__(self):
        if min(self.n_labeled, self.n_unlabeled, self.n_test) < 1:
            raise ValueError("SynthConfig: counts must be >= 1")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (u64)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    p.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="fixed reduction order (always on in this implementation)",
    )


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config and exit")


def _build_config(cls_factory, args):
    cfg = cls_factory()
    extra = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        extra[key.strip()] = value.strip()
    return load_config(cfg, args.config, extra)


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise SystemExit(f"missing required arguments: {', '.join('--' + n for n in missing)}")


def _write_report_csv(path, report) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(report_to_rows(report))


# ---------------------------------------------------------------------------
# Subcommand implementations.
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    cfg = _build_config(SynthConfig, args)
    if args.print_config:
        print(dump_config(cfg))
        return 0
    _require(args, "out-dir")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    ds = synth_dataset(seed, cfg.phantom, cfg.n_unlabeled, cfg.n_test, cfg.n_labeled)

    fvol.write_fvol(ds.atlas, out / "atlas.fvol")
    fvol.write_fvol(ds.atlas_labels, out / "atlas_labels.fvol")
    for i in range(1, cfg.n_labeled):
        fvol.write_fvol(ds.labeled_images[i], out / f"labeled_{i:02d}.fvol")
        fvol.write_fvol(ds.labeled_labels[i], out / f"labeled_{i:02d}_labels.fvol")
    unlabeled, unl_truth = [], []
    for i, (img, lbl) in enumerate(zip(ds.unlabeled, ds.unlabeled_labels)):
        name = f"unlabeled_{i:02d}.fvol"
        fvol.write_fvol(img, out / name)
        unlabeled.append(name)
        truth_name = f"eval_unlabeled_{i:02d}_labels.fvol"
        fvol.write_fvol(lbl, out / truth_name)
        unl_truth.append(truth_name)
    test = []
    for i, (img, lbl) in enumerate(zip(ds.test_images, ds.test_labels)):
        iname, lname = f"test_{i:02d}.fvol", f"test_{i:02d}_labels.fvol"
        fvol.write_fvol(img, out / iname)
        fvol.write_fvol(lbl, out / lname)
        test.append({"image": iname, "labels": lname})
    manifest = {
        "atlas_image": "atlas.fvol",
        "atlas_labels": "atlas_labels.fvol",
        "unlabeled": unlabeled,
        "test": test,
        "num_classes": cfg.phantom.num_classes,
        "unlabeled_labels": unl_truth,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    log.info("wrote phantom dataset with %d unlabeled / %d test images to %s",
             cfg.n_unlabeled, cfg.n_test, out)
    return 0


def _cmd_register(args) -> int:
    cfg = _build_config(RegConfig, args)
    if args.print_config:
        print(dump_config(cfg))
        return 0
    _require(args, "atlas", "target", "out-disp")
    atlas = fvol.read_scalar(args.atlas)
    target = fvol.read_scalar(args.target)
    weak = None
    if args.atlas_labels or args.pseudo:
        _require(args, "atlas-labels", "pseudo")
        weak = WeakSupervision(
            fvol.read_labels(args.atlas_labels), fvol.read_probs(args.pseudo)
        )
    result = register(atlas, target, cfg, weak)
    fvol.write_fvol(result.disp, args.out_disp)
    if args.out_trace:
        with open(args.out_trace, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("step", "loss"))
            writer.writerows((i, repr(v)) for i, v in enumerate(result.loss_trace))
    terms = " ".join(f"{k}={v:.6f}" for k, v in result.final_terms.items())
    print(f"final_loss={result.loss_trace[-1]:.6f} {terms}")
    return 0


def _cmd_ist(args) -> int:
    _require(args, "atlas", "target", "out")
    atlas = fvol.read_scalar(args.atlas)
    target = fvol.read_scalar(args.target)
    if args.beta == "random":
        beta = sample_beta(np.random.default_rng(0 if args.seed is None else args.seed))
    else:
        beta = float(args.beta)
    out = ist(atlas, target, beta)
    fvol.write_fvol(out, args.out)
    print(f"beta={beta!r}")
    return 0


def _cmd_features(args) -> int:
    _require(args, "in", "out")
    img = fvol.read_scalar(getattr(args, "in"))
    fvol.write_fvol(extract_features(img), args.out)
    return 0


def _cmd_seg_train(args) -> int:
    cfg = _build_config(TrainConfig, args)
    if args.print_config:
        print(dump_config(cfg))
        return 0
    _require(args, "pairs", "out")
    manifest = load_pairs_manifest(args.pairs)
    pairs = [
        (
            fvol.read_scalar(manifest.base_dir / img),
            fvol.read_labels(manifest.base_dir / lbl, manifest.num_classes),
        )
        for img, lbl in manifest.pairs
    ]
    cfg.seed = args.seed if args.seed is not None else cfg.seed
    model, trace = seg_train(pairs, cfg)
    save_model(model, args.out)
    print(f"steps={len(trace)} first_loss={trace[0]:.6f} last_loss={trace[-1]:.6f}")
    return 0


def _cmd_seg_predict(args) -> int:
    _require(args, "model", "in", "out")
    model = load_model(args.model)
    img = fvol.read_scalar(getattr(args, "in"))
    probs = seg_forward(model, img)
    if args.argmax:
        fvol.write_fvol(probs.argmax_labels(), args.out)
    else:
        fvol.write_fvol(probs, args.out)
    return 0


def _read_labels_any(path) -> LabelMap:
    arr, dtype_name = fvol.read_raw(path)
    if dtype_name == "i32" and arr.shape[-1] == 1:
        labels = arr[..., 0]
    elif dtype_name == "f32" and arr.shape[-1] >= 2:
        labels = np.argmax(arr, axis=-1).astype(np.int32)
    else:
        raise fvol.FvolTypeError(path, "expected a label map or prob mask", 0)
    return LabelMap(labels, max(int(labels.max()) + 1, 2))


def _cmd_eval(args) -> int:
    _require(args, "pred", "truth", "report")
    pred = _read_labels_any(args.pred)
    truth = _read_labels_any(args.truth)
    k = max(pred.num_classes, truth.num_classes)
    pred = LabelMap(pred.labels, k)
    truth = LabelMap(truth.labels, k)
    result = dice(pred, truth)
    with open(args.report, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("class", "dice"))
        for c in sorted(result.per_class):
            writer.writerow((c, repr(result.per_class[c])))
        writer.writerow(("mean", repr(result.mean)))
    print(f"mean_dice={result.mean:.6f} (background excluded)")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _build_config(PipelineConfig, args)
    if args.print_config:
        print(dump_config(cfg))
        return 0
    _require(args, "manifest", "out-dir")
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(load_manifest(args.manifest))
    eval_data = EvalData(ds.test_images, ds.test_labels, ds.unlabeled_labels)
    collect: dict = {}
    model, reports = run_pipeline(
        ds.atlas, ds.atlas_labels, ds.unlabeled, cfg,
        eval_data=eval_data, threads=args.threads, collect=collect,
    )
    for report in reports:
        _write_report_csv(out / f"round_{report.round_index}_report.csv", report)
        reg = report.reg_dice_mean
        seg = report.seg_dice_mean
        log.info(
            "round %d: reg_dice=%s seg_dice=%s",
            report.round_index,
            "n/a" if reg is None else f"{reg:.4f}",
            "n/a" if seg is None else f"{seg:.4f}",
        )
    save_model(model, out / "seg_model.segm")

    axis, mid = 2, ds.atlas.dims[2] // 2
    for i, img in enumerate(ds.unlabeled):
        emit_slice_png(img, axis, mid, out / f"unlabeled_{i:02d}_input.png")
        emit_slice_png(collect["warped_labels"][i], axis, mid, out / f"unlabeled_{i:02d}_pseudo.png")
        emit_slice_png(collect["pseudo"][i], axis, mid, out / f"unlabeled_{i:02d}_prediction.png")
        if ds.unlabeled_labels is not None:
            emit_slice_png(ds.unlabeled_labels[i], axis, mid, out / f"unlabeled_{i:02d}_truth.png")
    for i, img in enumerate(ds.test_images):
        emit_slice_png(img, axis, mid, out / f"test_{i:02d}_input.png")
        emit_slice_png(seg_forward(model, img), axis, mid, out / f"test_{i:02d}_prediction.png")
        emit_slice_png(ds.test_labels[i], axis, mid, out / f"test_{i:02d}_truth.png")
    final = reports[-1]
    print(
        f"rounds={len(reports)} "
        f"reg_dice={final.reg_dice_mean} seg_dice={final.seg_dice_mean}"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser wiring.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oneseg",
        description="One-shot atlas segmentation toolbox on FVOL volumes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a phantom dataset + manifest")
    _add_common(p)
    _add_config(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("register", help="estimate a displacement field for one pair")
    _add_common(p)
    _add_config(p)
    p.add_argument("--atlas")
    p.add_argument("--target")
    p.add_argument("--atlas-labels")
    p.add_argument("--pseudo")
    p.add_argument("--out-disp")
    p.add_argument("--out-trace")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("ist", help="amplitude-mix style transfer onto an aligned image")
    _add_common(p)
    p.add_argument("--atlas")
    p.add_argument("--target")
    p.add_argument("--beta", default="random", help="mixing factor in [0,1], or 'random'")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ist)

    p = sub.add_parser("features", help="filter-bank content features of an image")
    _add_common(p)
    p.add_argument("--in", dest="in")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("seg-train", help="train the voxel classifier on image/label pairs")
    _add_common(p)
    _add_config(p)
    p.add_argument("--pairs")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_seg_train)

    p = sub.add_parser("seg-predict", help="predict probabilities or labels for an image")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--in", dest="in")
    p.add_argument("--out")
    p.add_argument("--argmax", action="store_true", help="emit argmax labels instead of probs")
    p.set_defaults(func=_cmd_seg_predict)

    p = sub.add_parser("eval", help="per-class and mean Dice between two masks")
    _add_common(p)
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="run the full iterative loop from a manifest")
    _add_common(p)
    _add_config(p)
    p.add_argument("--manifest")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as e:
        if isinstance(e.code, str):
            print(f"error: {e.code}", file=sys.stderr)
            return 1
        return e.code if isinstance(e.code, int) else 1
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
