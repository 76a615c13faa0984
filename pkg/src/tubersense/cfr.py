"""Baseband blocks -> calibrated channel spectra.

Each stepped tone is received as ``r(t) = H e^{j 2 pi df t} + n(t)``. The
residual CFO ``df`` is the slope of a least-squares line through the
unwrapped block phase; ``H`` is the mean of the derotated block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_D_EFF_M, MAGNITUDE_FLOOR, SPEED_OF_LIGHT
from .errors import AlignmentError, DegenerateSignalError, DomainError, ValidationError
from .model import ChannelSpectrum, SweepRecord, unwrap_phase

MIN_BLOCK_LEN = 8


@dataclass(frozen=True)
class CfoEstimate:
    delta_f: float  # Hz
    residual_rms: float  # rad

    def __post_init__(self):
        if self.residual_rms < 0:
            raise ValidationError("residual_rms must be >= 0")


@dataclass(frozen=True)
class NormalizedSpectrum:
    base: ChannelSpectrum
    reference_kind: str  # "air", "day1" or "none"
    # Points where the reference magnitude was clamped to the guard floor.
    guarded: np.ndarray | None = None

    def __post_init__(self):
        if self.reference_kind not in ("air", "day1", "none"):
            raise ValidationError(f"unknown reference kind {self.reference_kind!r}")


def _fit_ramps(blocks: np.ndarray, rate: float):
    """Vectorized phase-ramp fit over rows of ``blocks``; returns (slope, rms)."""
    n = blocks.shape[-1]
    if n < MIN_BLOCK_LEN:
        raise DomainError(f"block length must be >= {MIN_BLOCK_LEN}, got {n}")
    if np.any(np.all(blocks == 0, axis=-1)):
        raise DegenerateSignalError("all-zero baseband block")
    t = np.arange(n) / rate
    phi = unwrap_phase(np.angle(blocks))
    tc = t - t.mean()
    slope = (phi - phi.mean(axis=-1, keepdims=True)) @ tc / (tc @ tc)
    intercept = phi.mean(axis=-1) - slope * t.mean()
    resid = phi - (intercept[..., None] + slope[..., None] * t)
    return slope / (2 * np.pi), np.sqrt(np.mean(resid**2, axis=-1))


def estimate_cfo(block, rate: float) -> CfoEstimate:
    """Residual carrier offset from a linear fit to the block's unwrapped phase."""
    block = np.asarray(block, dtype=complex)
    if block.ndim != 1:
        raise ValidationError("estimate_cfo expects a 1-D block")
    df, rms = _fit_ramps(block[None, :], rate)
    return CfoEstimate(float(df[0]), float(rms[0]))


def estimate_channel(block, rate: float, cfo: CfoEstimate) -> complex:
    """Mean of the CFO-derotated block."""
    block = np.asarray(block, dtype=complex)
    if block.size < MIN_BLOCK_LEN:
        raise DomainError(f"block length must be >= {MIN_BLOCK_LEN}, got {block.size}")
    t = np.arange(block.size) / rate
    return complex(np.mean(block * np.exp(-2j * np.pi * cfo.delta_f * t)))


def assemble_spectrum(record: SweepRecord) -> ChannelSpectrum:
    """Per-frequency CFO compensation and averaging, then polar form.

    Equivalent to ``estimate_cfo``/``estimate_channel`` on every block, done
    in one vectorized pass.
    """
    blocks = record.samples
    df, _ = _fit_ramps(blocks, record.sample_rate)
    t = np.arange(blocks.shape[1]) / record.sample_rate
    H = np.mean(blocks * np.exp(-2j * np.pi * df[:, None] * t[None, :]), axis=1)
    return ChannelSpectrum.from_response(record.grid, H)


def _divide(num: ChannelSpectrum, den: ChannelSpectrum):
    if num.grid != den.grid:
        raise AlignmentError(
            f"frequency grids differ: {len(num.grid)} points from {num.grid.f_start:g} Hz "
            f"vs {len(den.grid)} points from {den.grid.f_start:g} Hz"
        )
    d = den.H
    mag = np.abs(d)
    guarded = mag < MAGNITUDE_FLOOR
    safe = np.where(guarded, MAGNITUDE_FLOOR * np.exp(1j * np.angle(d)), d)
    q = num.H / safe
    # z / z can round to 1 - 1e-16j; identical points must give exactly 1.
    q[(num.H == d) & ~guarded] = 1.0
    return ChannelSpectrum.from_response(num.grid, q), guarded


def flatten(pot: ChannelSpectrum, air: ChannelSpectrum) -> NormalizedSpectrum:
    """Remove static front-end response by complex division with the air sweep."""
    spec, guarded = _divide(pot, air)
    return NormalizedSpectrum(spec, "air", guarded)


def normalize_day1(day_d, day_1) -> NormalizedSpectrum:
    """Divide a (flattened) day-``d`` spectrum by the pot's day-1 spectrum."""
    num = day_d.base if isinstance(day_d, NormalizedSpectrum) else day_d
    den = day_1.base if isinstance(day_1, NormalizedSpectrum) else day_1
    spec, guarded = _divide(num, den)
    return NormalizedSpectrum(spec, "day1", guarded)


def group_delay(spec: ChannelSpectrum) -> np.ndarray:
    """``-(1 / 2 pi) d phi / df`` with central differences, one-sided at the edges."""
    if len(spec.grid) < 3:
        raise DomainError("group delay needs at least 3 grid points")
    return -np.gradient(spec.phase, spec.grid.points) / (2 * np.pi)


def apparent_permittivity(tau_g, d_eff: float = DEFAULT_D_EFF_M):
    """``(c tau_g / d_eff)^2`` from group delay over an effective path length."""
    if not d_eff > 0:
        raise DomainError(f"d_eff must be positive, got {d_eff}")
    tau = np.asarray(tau_g, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("group delay must be positive; check geometry or phase unwrapping")
    eps = (SPEED_OF_LIGHT * tau / d_eff) ** 2
    return float(eps) if eps.ndim == 0 else eps
