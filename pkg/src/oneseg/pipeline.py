"""Orchestration of the iterative dual-model loop.

Round 0 registers the atlas onto every unlabeled image without supervision,
builds aligned style-transferred training pairs from the warped atlas and
its warped label, and trains the segmenter from scratch. Later rounds feed
the segmenter's predictions back into registration as fixed soft targets,
regenerate the training pairs, and retrain. Atlas selection and the
synthetic phantom population live alongside because they feed the same
experiments.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import LabelMap, ProbMask, ScalarField, warp_labels, warp_scalar
from .metrics import dice
from .registration import RegConfig, RegResult, WeakSupervision, register
from .segmenter import SegModel, TrainConfig, seg_forward, seg_train
from .spectral import ist, sample_beta

IST_REFRESH_MODES = ("per_round", "fixed")


@dataclass
class PipelineConfig:
    iterations: int = 3
    reg: RegConfig = field(default_factory=RegConfig)
    seg: TrainConfig = field(default_factory=TrainConfig)
    ist_refresh: str = "per_round"
    seed: int = 0
    use_ist: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("PipelineConfig.iterations must be >= 1")
        if self.ist_refresh not in IST_REFRESH_MODES:
            raise ValueError(
                f"PipelineConfig.ist_refresh must be one of {IST_REFRESH_MODES}, "
                f"got {self.ist_refresh!r}"
            )


@dataclass
class RoundReport:
    round_index: int
    reg_dice: list[float]
    seg_dice: list[float]
    reg_loss: list[float]
    reg_terms_mean: dict[str, float]
    seg_loss_first: float
    seg_loss_final: float

    def __post_init__(self):
        for v in list(self.reg_dice) + list(self.seg_dice):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"RoundReport: Dice value {v} outside [0, 1]")

    @property
    def reg_dice_mean(self) -> float | None:
        return float(np.mean(self.reg_dice)) if self.reg_dice else None

    @property
    def seg_dice_mean(self) -> float | None:
        return float(np.mean(self.seg_dice)) if self.seg_dice else None


@dataclass(frozen=True)
class EvalData:
    """Ground truth used only for reporting, never for training."""

    test_images: list[ScalarField] = field(default_factory=list)
    test_labels: list[LabelMap] = field(default_factory=list)
    unlabeled_labels: list[LabelMap] | None = None


def global_ncc(x: ScalarField, y: ScalarField) -> float:
    """Whole-image normalized cross-correlation in [-1, 1]."""
    a = x.data.ravel() - x.data.mean()
    b = y.data.ravel() - y.data.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


def select_atlas(candidates: list[ScalarField], test_images: list[ScalarField]) -> int:
    """Index of the candidate with the highest mean NCC against the test set."""
    if not candidates or not test_images:
        raise ValueError("select_atlas: empty candidate or test set")
    dims = candidates[0].dims
    for img in list(candidates) + list(test_images):
        if img.dims != dims:
            raise ValueError("select_atlas: images must share dims")
    scores = [
        float(np.mean([global_ncc(c, t) for t in test_images])) for c in candidates
    ]
    return int(np.argmax(scores))


def _map_indexed(fn, n: int, threads: int):
    """Deterministic parallel map: results assembled in index order."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _round_seg_seed(seed: int, round_index: int) -> int:
    return int(np.random.SeedSequence((seed, 7, round_index)).generate_state(1)[0])


def _beta_rng(seed: int, round_index: int, image: int, copy: int) -> np.random.Generator:
    return np.random.default_rng((seed, 11, round_index, image, copy))


REPORT_COLUMNS = ("metric", "index", "value")
_TERM_KEYS = ("l_ic", "l_fc", "l_smo", "l_weak")


def report_to_rows(report: RoundReport) -> list[tuple[str, str, str]]:
    """Flatten a report to (metric, index, value) rows; floats via repr so the
    round trip is exact."""
    rows: list[tuple[str, str, str]] = [("round", "", str(report.round_index))]
    for name, values in (
        ("reg_dice", report.reg_dice),
        ("seg_dice", report.seg_dice),
        ("reg_loss", report.reg_loss),
    ):
        rows.extend((name, str(i), repr(float(v))) for i, v in enumerate(values))
    for key in _TERM_KEYS:
        rows.append((f"reg_term_{key}", "", repr(float(report.reg_terms_mean[key]))))
    rows.append(("seg_loss_first", "", repr(float(report.seg_loss_first))))
    rows.append(("seg_loss_final", "", repr(float(report.seg_loss_final))))
    return rows


def report_from_rows(rows) -> RoundReport:
    """Inverse of :func:`report_to_rows`."""
    scalars: dict[str, float] = {}
    series: dict[str, list[tuple[int, float]]] = {"reg_dice": [], "seg_dice": [], "reg_loss": []}
    terms: dict[str, float] = {}
    round_index = 0
    for metric, index, value in rows:
        if metric == "round":
            round_index = int(value)
        elif metric in series:
            series[metric].append((int(index), float(value)))
        elif metric.startswith("reg_term_"):
            terms[metric[len("reg_term_") :]] = float(value)
        else:
            scalars[metric] = float(value)
    ordered = {k: [v for _, v in sorted(vals)] for k, vals in series.items()}
    return RoundReport(
        round_index=round_index,
        reg_dice=ordered["reg_dice"],
        seg_dice=ordered["seg_dice"],
        reg_loss=ordered["reg_loss"],
        reg_terms_mean=terms,
        seg_loss_first=scalars["seg_loss_first"],
        seg_loss_final=scalars["seg_loss_final"],
    )


def run_pipeline(
    atlas: ScalarField,
    atlas_labels: LabelMap,
    unlabeled: list[ScalarField],
    cfg: PipelineConfig,
    eval_data: EvalData | None = None,
    threads: int = 1,
    collect: dict | None = None,
) -> tuple[SegModel, list[RoundReport]]:
    """Run the full register / transfer / train / feed-back loop.

    ``eval_data`` supplies held-out truth for reporting. ``collect``, when
    given, receives the final round's artifacts (displacements, warped
    labels, pseudo masks) keyed by name.
    """
    if atlas.dims != atlas_labels.dims:
        raise ValueError("run_pipeline: atlas image/labels dims differ")
    for u in unlabeled:
        if u.dims != atlas.dims:
            raise ValueError("run_pipeline: unlabeled image dims differ from atlas")
    if not unlabeled:
        raise ValueError("run_pipeline: no unlabeled images")
    eval_data = eval_data or EvalData()

    n = len(unlabeled)
    pseudo: list[ProbMask] = []
    reports: list[RoundReport] = []
    model: SegModel | None = None
    fixed_pairs = None

    for rnd in range(cfg.iterations):
        weak_on = rnd > 0 and len(pseudo) == n

        def _register_one(i: int) -> RegResult:
            weak = WeakSupervision(atlas_labels, pseudo[i]) if weak_on else None
            return register(atlas, unlabeled[i], cfg.reg, weak)

        results = _map_indexed(_register_one, n, threads)
        warped_imgs = [warp_scalar(atlas, r.disp) for r in results]
        warped_lbls = [warp_labels(atlas_labels, r.disp) for r in results]

        reg_dice: list[float] = []
        if eval_data.unlabeled_labels is not None:
            reg_dice = [
                dice(warped_lbls[i], eval_data.unlabeled_labels[i]).mean for i in range(n)
            ]

        if cfg.use_ist:
            if cfg.ist_refresh == "fixed" and fixed_pairs is not None:
                pairs = fixed_pairs
            else:
                pairs = []
                for i in range(n):
                    for c in range(cfg.seg.copies_per_unlabeled):
                        beta = sample_beta(_beta_rng(cfg.seed, rnd, i, c))
                        pairs.append((ist(warped_imgs[i], unlabeled[i], beta), warped_lbls[i]))
                if cfg.ist_refresh == "fixed" and fixed_pairs is None:
                    fixed_pairs = pairs
        else:
            pairs = [(unlabeled[i], warped_lbls[i]) for i in range(n)]

        seg_cfg = replace(cfg.seg, seed=_round_seg_seed(cfg.seed, rnd))
        model, trace = seg_train(pairs, seg_cfg)

        pseudo = _map_indexed(lambda i: seg_forward(model, unlabeled[i]), n, threads)

        seg_dice: list[float] = []
        if eval_data.test_images:
            preds = _map_indexed(
                lambda i: seg_forward(model, eval_data.test_images[i]).argmax_labels(),
                len(eval_data.test_images),
                threads,
            )
            seg_dice = [
                dice(preds[i], eval_data.test_labels[i]).mean
                for i in range(len(eval_data.test_images))
            ]

        term_keys = ("l_ic", "l_fc", "l_smo", "l_weak")
        terms_mean = {
            k: float(np.mean([r.final_terms[k] for r in results])) for k in term_keys
        }
        reports.append(
            RoundReport(
                round_index=rnd,
                reg_dice=reg_dice,
                seg_dice=seg_dice,
                reg_loss=[r.loss_trace[-1] for r in results],
                reg_terms_mean=terms_mean,
                seg_loss_first=float(trace[0]),
                seg_loss_final=float(trace[-1]),
            )
        )
        if collect is not None and rnd == cfg.iterations - 1:
            collect["disps"] = [r.disp for r in results]
            collect["warped_labels"] = warped_lbls
            collect["warped_images"] = warped_imgs
            collect["pseudo"] = pseudo
            collect["pairs"] = pairs

    return model, reports
