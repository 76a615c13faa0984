"""Growth features of a normalized CFR over the working band.

BAI, H/L, Slope and RippleVar. Band edges snap to the nearest grid points
(inclusive); integrals use the trapezoid rule.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .cfr import assemble_spectrum, flatten, normalize_day1
from .constants import BAND_F1_HZ, BAND_F2_HZ, BAND_SPLIT_HZ
from .errors import AlignmentError, BandRangeError, ParameterError, ValidationError
from .model import ChannelSpectrum, SweepRecord

DEFAULT_RIPPLE_WINDOW = 9


@dataclass(frozen=True)
class WorkingBand:
    f1: float = BAND_F1_HZ
    f2: float = BAND_F2_HZ
    split: float = BAND_SPLIT_HZ

    def __post_init__(self):
        if not self.f1 < self.split < self.f2:
            raise ValidationError(f"band needs f1 < split < f2, got {self.f1}, {self.split}, {self.f2}")


@dataclass(frozen=True)
class FeatureVector:
    pot_id: str
    day: int
    bai: float  # dB
    hl: float
    slope: float  # dB/Hz
    ripple_var: float

    def as_array(self) -> np.ndarray:
        return np.array([self.bai, self.hl, self.slope, self.ripple_var])


FEATURE_NAMES = ("bai", "hl", "slope", "ripple_var")


def _snap(f: np.ndarray, target: float) -> int:
    return int(np.argmin(np.abs(f - target)))


def band_indices(spec: ChannelSpectrum, f1: float, f2: float) -> slice:
    f = spec.grid.points
    half = spec.grid.f_step / 2
    if f1 < f[0] - half or f2 > f[-1] + half or f1 >= f2:
        raise BandRangeError(
            f"band [{f1:g}, {f2:g}] Hz not covered by grid [{f[0]:g}, {f[-1]:g}] Hz"
        )
    return slice(_snap(f, f1), _snap(f, f2) + 1)


def bai(spec: ChannelSpectrum, band: WorkingBand = WorkingBand()) -> float:
    """Band-averaged dB deficit below the in-band maximum."""
    sl = band_indices(spec, band.f1, band.f2)
    f, a = spec.grid.points[sl], spec.a_db[sl]
    if f.size < 2:
        raise BandRangeError("band covers fewer than 2 grid points")
    return float(trapezoid(a.max() - a, f) / (f[-1] - f[0]))


def hl_ratio(spec: ChannelSpectrum, band: WorkingBand = WorkingBand()) -> float:
    """Integrated linear magnitude of the upper half-band over the lower."""
    sl = band_indices(spec, band.f1, band.f2)
    f, mag = spec.grid.points[sl], spec.magnitude[sl]
    k = _snap(f, band.split)
    if k == 0 or k == f.size - 1:
        raise BandRangeError("split must fall strictly inside the band")
    low = trapezoid(mag[: k + 1], f[: k + 1])
    high = trapezoid(mag[k:], f[k:])
    return float(high / low)


def spectral_slope(spec: ChannelSpectrum, band: WorkingBand = WorkingBand()) -> float:
    """Least-squares slope of A_dB(f) in dB/Hz."""
    sl = band_indices(spec, band.f1, band.f2)
    f, a = spec.grid.points[sl], spec.a_db[sl]
    if f.size < 2:
        raise BandRangeError("slope needs at least 2 in-band points")
    fc = f - f.mean()
    return float(np.sum(fc * (a - a.mean())) / np.sum(fc**2))


def sliding_median(x: np.ndarray, window: int) -> np.ndarray:
    """Running median; the window is truncated at the array edges."""
    half = window // 2
    n = x.size
    return np.array([np.median(x[max(0, i - half): min(n, i + half + 1)]) for i in range(n)])


def ripple_variance(spec: ChannelSpectrum, band: WorkingBand = WorkingBand(),
                    window: int = DEFAULT_RIPPLE_WINDOW) -> float:
    """Sample std of |H| over its sliding-median baseline."""
    sl = band_indices(spec, band.f1, band.f2)
    mag = spec.magnitude[sl]
    if window < 3 or window % 2 == 0 or window > mag.size:
        raise ParameterError(f"window must be odd, >= 3 and <= {mag.size} in-band points, got {window}")
    baseline = sliding_median(mag, window)
    if np.any(baseline <= 0):
        # Deep nulls across a whole window: ratio undefined there.
        baseline = np.where(baseline <= 0, np.finfo(float).tiny, baseline)
    return float(np.std(mag / baseline, ddof=1))


def compute_features(spec: ChannelSpectrum, band: WorkingBand = WorkingBand(),
                     window: int = DEFAULT_RIPPLE_WINDOW, pot_id: str = "", day: int = 1) -> FeatureVector:
    return FeatureVector(
        pot_id, day,
        bai(spec, band), hl_ratio(spec, band), spectral_slope(spec, band),
        ripple_variance(spec, band, window),
    )


def feature_series(records: Sequence[SweepRecord], air: SweepRecord, band: WorkingBand = WorkingBand(),
                   window: int = DEFAULT_RIPPLE_WINDOW) -> list[FeatureVector]:
    """Air-flatten, day-1 normalize and featurize every record.

    Records may mix pots; each pot is normalized against its own earliest
    day. Output keeps the input order.
    """
    air_spec = assemble_spectrum(air)
    by_pot = defaultdict(list)
    for i, rec in enumerate(records):
        if rec.grid != air.grid:
            raise AlignmentError(f"record {rec.pot_id!r} day {rec.day} is not on the air reference grid")
        by_pot[rec.pot_id].append(i)

    flat = {}
    for idxs in by_pot.values():
        for i in idxs:
            flat[i] = flatten(assemble_spectrum(records[i]), air_spec)

    out = [None] * len(records)
    for idxs in by_pot.values():
        first = min(idxs, key=lambda i: records[i].day)
        ref = flat[first]
        for i in idxs:
            spec = normalize_day1(flat[i], ref).base
            out[i] = compute_features(spec, band, window, records[i].pot_id, records[i].day)
    return out
