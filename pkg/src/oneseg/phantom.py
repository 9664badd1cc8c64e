"""Synthetic labeled volumes: nested smooth regions rendered as intensity
images, deformed per subject, and re-styled by a monotone intensity remap.

A dataset generated from one seed shares its anatomy (region geometry,
boundary perturbation, base intensities) across subjects; each subject gets
its own smooth deformation ("content" variation) and its own monotone remap
plus mild noise ("style" variation). Labels are exact: they are warped by
the same per-subject deformation that produced the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import DisplacementField, LabelMap, ScalarField, warp_array, warp_labels


@dataclass
class PhantomConfig:
    dims: tuple[int, int, int] = (64, 64, 1)
    num_classes: int = 4
    deform_magnitude: float = 3.0
    deform_smooth: float = 6.0
    boundary_amplitude: float = 0.15
    edge_sigma: float = 0.8
    gamma_log_range: float = 0.45
    contrast_jitter: float = 0.2
    brightness_jitter: float = 0.1
    texture_amplitude: float = 0.03
    texture_smooth: float = 4.0
    noise_sigma: float = 0.02

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) == 2:
            dims = (dims[0], dims[1], 1)
        if len(dims) != 3 or any(n < 1 for n in dims) or dims[0] < 8 or dims[1] < 8:
            raise ValueError(f"PhantomConfig.dims degenerate: {self.dims}")
        self.dims = dims
        if self.num_classes < 2:
            raise ValueError("PhantomConfig.num_classes must be >= 2")
        if self.deform_magnitude < 0 or self.noise_sigma < 0:
            raise ValueError("PhantomConfig: negative strength")

    def identity_style(self) -> "PhantomConfig":
        cfg = PhantomConfig(**{f: getattr(self, f) for f in (
            "dims", "num_classes", "deform_magnitude", "deform_smooth",
            "boundary_amplitude", "edge_sigma")})
        cfg.gamma_log_range = 0.0
        cfg.contrast_jitter = 0.0
        cfg.brightness_jitter = 0.0
        cfg.texture_amplitude = 0.0
        cfg.noise_sigma = 0.0
        return cfg


@dataclass(frozen=True)
class Anatomy:
    """Shared geometry of one synthetic population."""

    base_image: np.ndarray
    base_labels: np.ndarray
    num_classes: int


def _smooth_noise(rng: np.random.Generator, dims, sigma: float) -> np.ndarray:
    noise = rng.standard_normal(dims)
    sig = [sigma if n > 1 else 0.0 for n in dims]
    out = ndimage.gaussian_filter(noise, sig, mode="nearest")
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def sample_anatomy(rng: np.random.Generator, cfg: PhantomConfig) -> Anatomy:
    """Nested smoothly-perturbed ellipsoidal regions with distinct intensities."""
    w, h, d = cfg.dims
    k = cfg.num_classes
    center = np.array([
        (w - 1) / 2.0 + rng.uniform(-2.0, 2.0),
        (h - 1) / 2.0 + rng.uniform(-2.0, 2.0),
        (d - 1) / 2.0 if d > 1 else 0.0,
    ])
    axes = np.array([
        0.38 * w * (1.0 + rng.uniform(-0.08, 0.08)),
        0.38 * h * (1.0 + rng.uniform(-0.08, 0.08)),
        0.38 * d * (1.0 + rng.uniform(-0.08, 0.08)) if d > 1 else 1.0,
    ])
    grid = np.stack(
        np.meshgrid(np.arange(w), np.arange(h), np.arange(d), indexing="ij"), axis=-1
    ).astype(np.float64)
    rel = (grid - center) / axes
    if d == 1:
        rel[..., 2] = 0.0
    radius = np.sqrt((rel * rel).sum(axis=-1))
    radius = radius + cfg.boundary_amplitude * _smooth_noise(rng, cfg.dims, min(w, h) / 8.0)

    # thresholds descend from the outer boundary toward the core
    thresholds = np.linspace(1.0, 0.42, k - 1)
    labels = np.zeros(cfg.dims, dtype=np.int32)
    for t in thresholds:
        labels += (radius < t).astype(np.int32)

    means = np.linspace(0.05, 0.95, k) + rng.uniform(-0.03, 0.03, size=k)
    image = means[labels]
    sig = [cfg.edge_sigma if n > 1 else 0.0 for n in cfg.dims]
    image = ndimage.gaussian_filter(image, sig, mode="nearest")
    return Anatomy(image, labels, k)


def sample_subject_disp(rng: np.random.Generator, cfg: PhantomConfig) -> np.ndarray:
    """Smooth random displacement with exact peak magnitude per component."""
    w, h, d = cfg.dims
    disp = np.zeros((w, h, d, 3))
    if cfg.deform_magnitude == 0.0:
        return disp
    for ax in range(3):
        if cfg.dims[ax] > 1:
            disp[..., ax] = cfg.deform_magnitude * _smooth_noise(rng, cfg.dims, cfg.deform_smooth)
    return disp


def apply_style(img: np.ndarray, rng: np.random.Generator, cfg: PhantomConfig) -> np.ndarray:
    """Monotone global intensity remap plus smooth texture and mild noise."""
    gamma = float(np.exp(rng.uniform(-cfg.gamma_log_range, cfg.gamma_log_range)))
    contrast = 1.0 + rng.uniform(-cfg.contrast_jitter, cfg.contrast_jitter)
    brightness = rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter)
    out = contrast * np.power(np.clip(img, 0.0, 1.0), gamma) + brightness
    if cfg.texture_amplitude > 0:
        out = out + cfg.texture_amplitude * _smooth_noise(rng, img.shape, cfg.texture_smooth)
    if cfg.noise_sigma > 0:
        out = out + cfg.noise_sigma * rng.standard_normal(img.shape)
    return out


def render_subject(
    anatomy: Anatomy,
    content_rng: np.random.Generator,
    style_rng: np.random.Generator,
    cfg: PhantomConfig,
) -> tuple[ScalarField, LabelMap]:
    """One subject: anatomy deformed by a content draw, restyled by a style draw."""
    disp = DisplacementField(sample_subject_disp(content_rng, cfg))
    img = warp_array(anatomy.base_image, disp.vectors)
    labels = warp_labels(LabelMap(anatomy.base_labels, anatomy.num_classes), disp)
    styled = apply_style(img, style_rng, cfg)
    return ScalarField(styled), labels


def synth_phantom(rng: np.random.Generator, cfg: PhantomConfig) -> tuple[ScalarField, LabelMap]:
    """Fresh anatomy, subject deformation, and style from a single stream."""
    anatomy = sample_anatomy(rng, cfg)
    return render_subject(anatomy, rng, rng, cfg)


@dataclass(frozen=True)
class PhantomDataset:
    labeled_images: list[ScalarField]
    labeled_labels: list[LabelMap]
    unlabeled: list[ScalarField]
    unlabeled_labels: list[LabelMap]
    test_images: list[ScalarField]
    test_labels: list[LabelMap]

    @property
    def atlas(self) -> ScalarField:
        return self.labeled_images[0]

    @property
    def atlas_labels(self) -> LabelMap:
        return self.labeled_labels[0]


def synth_dataset(
    seed: int,
    cfg: PhantomConfig,
    n_unlabeled: int,
    n_test: int,
    n_labeled: int = 1,
) -> PhantomDataset:
    """A shared-anatomy population split into labeled/unlabeled/test subjects.

    Ground-truth labels for the unlabeled subjects are returned for
    evaluation only; no training stage sees them.
    """
    root = np.random.SeedSequence(seed)
    anat_ss, subj_ss = root.spawn(2)
    anatomy = sample_anatomy(np.random.default_rng(anat_ss), cfg)
    total = n_labeled + n_unlabeled + n_test
    subjects = []
    for child in subj_ss.spawn(total):
        content_ss, style_ss = child.spawn(2)
        subjects.append(
            render_subject(
                anatomy,
                np.random.default_rng(content_ss),
                np.random.default_rng(style_ss),
                cfg,
            )
        )
    lab = subjects[:n_labeled]
    unl = subjects[n_labeled : n_labeled + n_unlabeled]
    tst = subjects[n_labeled + n_unlabeled :]
    return PhantomDataset(
        [s[0] for s in lab],
        [s[1] for s in lab],
        [s[0] for s in unl],
        [s[1] for s in unl],
        [s[0] for s in tst],
        [s[1] for s in tst],
    )
