"""Discrete Fourier transforms, amplitude/phase decomposition, and the
image-aligned style transformation (amplitude mixing at preserved phase).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fields import DimensionMismatchError, ScalarField

IMAG_RESIDUE_TOL = 1e-3


class SpectrumResidueWarning(UserWarning):
    """Inverse transform discarded a suspiciously large imaginary part."""


@dataclass(frozen=True)
class Spectrum:
    """Complex frequency-domain grid stored as real/imag parts."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        r = np.array(self.real, dtype=np.float64)
        i = np.array(self.imag, dtype=np.float64)
        if r.ndim == 2:
            r = r[:, :, None]
        if i.ndim == 2:
            i = i[:, :, None]
        if r.shape != i.shape or r.ndim != 3:
            raise ValueError(f"Spectrum: real/imag shapes differ or not 3D: {r.shape} vs {i.shape}")
        if not (np.isfinite(r).all() and np.isfinite(i).all()):
            raise ValueError("Spectrum: non-finite entries")
        r.setflags(write=False)
        i.setflags(write=False)
        object.__setattr__(self, "real", r)
        object.__setattr__(self, "imag", i)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.real.shape)

    def complex_view(self) -> np.ndarray:
        return self.real + 1j * self.imag

    def amplitude(self) -> np.ndarray:
        return np.sqrt(self.real * self.real + self.imag * self.imag)

    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)


def to_spectrum(img: ScalarField) -> Spectrum:
    """Full unnormalized forward DFT; the DC bin holds the intensity sum."""
    f = np.fft.fftn(img.data, axes=(0, 1, 2))
    return Spectrum(f.real, f.imag)


def from_spectrum(spec: Spectrum) -> ScalarField:
    """Inverse DFT, real part kept.

    Emits :class:`SpectrumResidueWarning` when the discarded imaginary part
    exceeds ``1e-3`` of the signal norm, which indicates the spectrum was not
    conjugate-symmetric (i.e. not the spectrum of a real image).
    """
    inv = np.fft.ifftn(spec.complex_view(), axes=(0, 1, 2))
    real_norm = float(np.linalg.norm(inv.real))
    imag_norm = float(np.linalg.norm(inv.imag))
    if imag_norm > IMAG_RESIDUE_TOL * max(real_norm, np.finfo(np.float64).tiny):
        warnings.warn(
            f"from_spectrum: imaginary residue {imag_norm:.3g} exceeds "
            f"{IMAG_RESIDUE_TOL:g} of signal norm {real_norm:.3g}",
            SpectrumResidueWarning,
            stacklevel=2,
        )
    return ScalarField(inv.real)


def ist(warped_atlas: ScalarField, target: ScalarField, beta: float) -> ScalarField:
    """Blend spectrum amplitudes at fixed phase.

    The output keeps the phase of ``warped_atlas`` (so its spatial structure,
    and hence any mask aligned with it, is untouched) while its amplitude
    becomes ``(1-beta)*A(warped_atlas) + beta*A(target)``. ``beta=0`` is an
    identity up to FFT round-trip error.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"ist: beta must be in [0, 1], got {beta}")
    if warped_atlas.dims != target.dims:
        raise DimensionMismatchError("ist: atlas vs target", warped_atlas.dims, target.dims)
    spec_a = to_spectrum(warped_atlas)
    spec_t = to_spectrum(target)
    amp = (1.0 - beta) * spec_a.amplitude() + beta * spec_t.amplitude()
    phase = spec_a.phase()
    mixed = amp * np.exp(1j * phase)
    return from_spectrum(Spectrum(mixed.real, mixed.imag))


def sample_beta(rng: np.random.Generator) -> float:
    """One uniform draw from [0, 1]; reproducible under a seeded generator."""
    return float(rng.random())
