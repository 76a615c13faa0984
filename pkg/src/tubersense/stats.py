"""Reference standardization, Gaussian KDE, divergences and harvest correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps
from scipy.integrate import trapezoid

from .constants import DENSITY_FLOOR
from .errors import (
    AlignmentError,
    DegenerateReferenceError,
    InsufficientReplicatesError,
    ValidationError,
)
from .features import FEATURE_NAMES, FeatureVector

SUPPORT_POINTS = 512
SUPPORT_PAD_BANDWIDTHS = 4.0
DEFAULT_RESAMPLES = 10_000
TREND_DAYS = 45


@dataclass(frozen=True)
class ZScoreContext:
    mu: float
    sigma: float
    reference_size: int

    def __post_init__(self):
        if self.reference_size < 2:
            raise DegenerateReferenceError("reference set needs at least 2 values")
        if not self.sigma > 0:
            raise DegenerateReferenceError("reference set has zero spread")

    @classmethod
    def from_reference(cls, reference) -> "ZScoreContext":
        ref = np.asarray(reference, dtype=float).ravel()
        if ref.size < 2:
            raise DegenerateReferenceError("reference set needs at least 2 values")
        return cls(float(ref.mean()), float(ref.std(ddof=1)), int(ref.size))


def zscore(values, ctx: ZScoreContext) -> np.ndarray:
    return (np.asarray(values, dtype=float) - ctx.mu) / ctx.sigma


@dataclass(frozen=True)
class Density:
    support: np.ndarray
    values: np.ndarray
    bandwidth: float

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.shape != v.shape or s.ndim != 1 or s.size < 2:
            raise ValidationError("support and values must be matching 1-D arrays of >= 2 points")
        if np.any(np.diff(s) <= 0):
            raise ValidationError("support must be strictly increasing")
        if np.any(v < 0):
            raise ValidationError("density values must be >= 0")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "values", v)

    @property
    def integral(self) -> float:
        return float(trapezoid(self.values, self.support))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValidationError("automatic bandwidth needs >= 2 samples; pass bandwidth explicitly")
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * x.size ** (-0.2)
    if not h > 0:
        raise ValidationError("samples have zero spread; pass bandwidth explicitly")
    return float(h)


def default_support(samples, bandwidth: float, n_points: int = SUPPORT_POINTS) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    pad = SUPPORT_PAD_BANDWIDTHS * bandwidth
    return np.linspace(x.min() - pad, x.max() + pad, n_points)


def kde(samples, bandwidth: float | None = None, support=None) -> Density:
    """Gaussian kernel density; Silverman bandwidth when none is given."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise ValidationError("kde needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    z = default_support(x, h) if support is None else np.asarray(support, dtype=float)
    u = (z[:, None] - x[None, :]) / h
    p = np.exp(-0.5 * u**2).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return Density(z, p, h)


def _common(p: Density, q: Density):
    if p.support.shape != q.support.shape or not np.array_equal(p.support, q.support):
        raise AlignmentError("densities are not on a common support")
    return p.support


def kl_divergence(p: Density, q: Density) -> float:
    """Trapezoid KL(p || q) in nats; both densities floored at 1e-12 in the log."""
    z = _common(p, q)
    pv = p.values
    integrand = pv * np.log(np.maximum(pv, DENSITY_FLOOR) / np.maximum(q.values, DENSITY_FLOOR))
    return float(trapezoid(integrand, z))


def js_divergence(p: Density, q: Density) -> float:
    """Jensen-Shannon divergence of the renormalized densities (0 <= JS <= ln 2)."""
    z = _common(p, q)
    pn = p.values / trapezoid(p.values, z)
    qn = q.values / trapezoid(q.values, z)
    m = 0.5 * (pn + qn)

    def _kl_to_m(a):
        # a > 0 implies m >= a/2 > 0, so only a = 0 terms need masking
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(a > 0, a * np.log(a / m), 0.0)
        return trapezoid(t, z)

    js = 0.5 * _kl_to_m(pn) + 0.5 * _kl_to_m(qn)
    return float(min(max(js, 0.0), math.log(2)))


@dataclass(frozen=True)
class TrendDescriptor:
    end_value: float
    temporal_slope: float  # feature units per day


def trend_descriptors(series: Sequence[FeatureVector], days: int = TREND_DAYS) -> dict[str, TrendDescriptor]:
    """End-of-window value and OLS slope versus day for each feature of one pot."""
    if len({fv.pot_id for fv in series}) > 1:
        raise ValidationError("trend_descriptors expects the series of a single pot")
    by_day = {fv.day: fv for fv in series}
    missing = [d for d in range(1, days + 1) if d not in by_day]
    if missing:
        raise InsufficientReplicatesError(f"series lacks days {missing[:5]}{'...' if len(missing) > 5 else ''}")
    d = np.arange(1, days + 1, dtype=float)
    F = np.array([by_day[int(k)].as_array() for k in d])
    dc = d - d.mean()
    slopes = dc @ (F - F.mean(axis=0)) / (dc @ dc)
    return {name: TrendDescriptor(float(F[-1, j]), float(slopes[j])) for j, name in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class Correlation:
    feature: str
    descriptor: str
    outcome: str
    n: int
    pearson: float
    spearman: float
    pearson_ci: tuple | None
    spearman_ci: tuple | None
    n_degenerate: int


def _pearson_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise Pearson r; NaN where either row has zero variance."""
    xc = x - x.mean(axis=-1, keepdims=True)
    yc = y - y.mean(axis=-1, keepdims=True)
    den = np.sqrt(np.sum(xc**2, axis=-1) * np.sum(yc**2, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sum(xc * yc, axis=-1) / den
    return np.where(den > 0, np.clip(r, -1.0, 1.0), np.nan)


def _spearman_rows(x, y):
    return _pearson_rows(sps.rankdata(x, axis=-1), sps.rankdata(y, axis=-1))


def bootstrap_correlation(x, y, resamples: int = DEFAULT_RESAMPLES, seed: int = 0):
    """Point Pearson/Spearman plus percentile 95% pot-level bootstrap CIs.

    Returns ``(pearson, spearman, pearson_ci, spearman_ci, n_degenerate)``;
    CIs are ``None`` when ``resamples`` is 0 or every resample is degenerate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3 or y.size != n:
        raise InsufficientReplicatesError(f"correlation needs >= 3 paired pots, got {n}")
    r_p = float(_pearson_rows(x, y))
    r_s = float(_spearman_rows(x, y))
    if resamples <= 0:
        return r_p, r_s, None, None, 0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    bp = _pearson_rows(x[idx], y[idx])
    bs = _spearman_rows(x[idx], y[idx])
    ok = np.isfinite(bp) & np.isfinite(bs)
    n_bad = int(resamples - ok.sum())
    if not ok.any():
        return r_p, r_s, None, None, n_bad

    def ci(v):
        lo, hi = np.percentile(v[ok], [2.5, 97.5])
        return float(lo), float(hi)

    return r_p, r_s, ci(bp), ci(bs), n_bad


def correlate_with_harvest(descriptors: Mapping[str, Mapping[str, TrendDescriptor]], outcomes, *,
                           resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> list[Correlation]:
    """Correlate per-pot trend descriptors with harvest mass and volume.

    ``descriptors`` maps pot id -> {feature: TrendDescriptor}; pots without
    an outcome are ignored.
    """
    by_pot = {o.pot_id: o for o in outcomes}
    pots = [p for p in descriptors if p in by_pot]
    if len(pots) < 3:
        raise InsufficientReplicatesError(f"need >= 3 pots with both descriptors and outcomes, got {len(pots)}")
    rows = []
    for feature in FEATURE_NAMES:
        for kind in ("end_value", "temporal_slope"):
            x = [getattr(descriptors[p][feature], kind) for p in pots]
            for outcome in ("mass", "volume"):
                y = [getattr(by_pot[p], outcome) for p in pots]
                rp, rs, cp, cs, bad = bootstrap_correlation(x, y, resamples, seed)
                rows.append(Correlation(feature, kind, outcome, len(pots), rp, rs, cp, cs, bad))
    return rows
