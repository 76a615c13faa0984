"""Map-agreement metrics for grid localization.

Accuracy counts a cell as correct when the thresholded prediction equals
the truth, or, under a distance tolerance, when a mismatch has a matching
cell of the other map within the Chebyshev tolerance radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .constants import GRID_SPACING_CM
from .errors import AlignmentError, ValidationError
from .model import OccupancyMap, stage_for_day

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0
SSIM_MAX_WINDOW = 7


def label_stage(day: int) -> str:
    return stage_for_day(day)


def tolerance_radius(d_cm: float, spacing_cm: float = GRID_SPACING_CM) -> int:
    """Cells of dilation for a tolerance of ``d_cm``: ``ceil(d / spacing)``."""
    if d_cm < 0:
        raise ValidationError(f"tolerance must be >= 0, got {d_cm}")
    # round() drops float noise such as 10.0 / 5 = 2.0000000000000004
    return int(math.ceil(round(d_cm / spacing_cm, 9)))


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation by a (2r+1) x (2r+1) square (Chebyshev ball)."""
    mask = np.asarray(mask, dtype=bool)
    if radius <= 0:
        return mask.copy()
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=structure)


def _pair(pred: OccupancyMap, truth: OccupancyMap):
    if pred.grid_shape != truth.grid_shape:
        raise AlignmentError(f"map shapes differ: {pred.grid_shape} vs {truth.grid_shape}")
    return pred.values, truth.values


def _binarize(pred, truth, eta):
    if not 0 <= eta <= 1:
        raise ValidationError(f"threshold must lie in [0, 1], got {eta}")
    p, t = _pair(pred, truth)
    return p >= eta, t >= 0.5


def accuracy(pred: OccupancyMap, truth: OccupancyMap, eta: float = 0.5, tolerance_cm: float = 0.0) -> float:
    """Fraction of cells where the thresholded prediction agrees with truth.

    With a tolerance, a predicted-occupied cell within the dilated truth and
    a true cell within the dilated prediction also count as agreeing. The
    score is therefore nondecreasing in the tolerance.
    """
    p, t = _binarize(pred, truth, eta)
    r = tolerance_radius(tolerance_cm, truth.spacing)
    ok = p == t
    if r > 0:
        ok |= (p & dilate(t, r)) | (t & dilate(p, r))
    return float(ok.mean())


def balanced_accuracy(pred: OccupancyMap, truth: OccupancyMap, eta: float = 0.5) -> float:
    """Mean of hit rate on occupied and on empty cells (supplementary)."""
    p, t = _binarize(pred, truth, eta)
    rates = [np.mean(p[t] == 1) if t.any() else None, np.mean(p[~t] == 0) if (~t).any() else None]
    rates = [x for x in rates if x is not None]
    return float(np.mean(rates))


def mse_map(pred: OccupancyMap, truth: OccupancyMap) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def ssim_map(pred: OccupancyMap, truth: OccupancyMap, window: int | None = None) -> float:
    """Mean SSIM over all fully contained uniform square windows."""
    x, y = _pair(pred, truth)
    win = window or min(SSIM_MAX_WINDOW, *x.shape)
    if win < 1 or win > min(x.shape):
        raise ValidationError(f"SSIM window {win} does not fit map of shape {x.shape}")
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    wx = sliding_window_view(x, (win, win))
    wy = sliding_window_view(y, (win, win))
    mx = wx.mean(axis=(-1, -2))
    my = wy.mean(axis=(-1, -2))
    vx = wx.var(axis=(-1, -2))
    vy = wy.var(axis=(-1, -2))
    cxy = ((wx - mx[..., None, None]) * (wy - my[..., None, None])).mean(axis=(-1, -2))
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(s.mean())


@dataclass(frozen=True)
class EvalReport:
    source: str
    threshold: float
    accuracy: float
    accuracy_by_tolerance: dict = field(default_factory=dict)
    mse: float = 0.0
    ssim: float = 1.0
    balanced_accuracy: float = float("nan")

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise ValidationError("accuracy must lie in [0, 1]")
        if self.mse < 0:
            raise ValidationError("mse must be >= 0")

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "threshold": self.threshold,
            "accuracy": self.accuracy,
            "accuracy_by_tolerance": {str(k): v for k, v in self.accuracy_by_tolerance.items()},
            "mse": self.mse,
            "ssim": self.ssim,
            "balanced_accuracy": self.balanced_accuracy,
        }


def evaluate_map(pred: OccupancyMap, truth: OccupancyMap, eta: float = 0.5,
                 tolerances_cm: Sequence[float] = (0.0, 5.1, 10.2), source: str = "") -> EvalReport:
    return EvalReport(
        source=source,
        threshold=float(eta),
        accuracy=accuracy(pred, truth, eta, 0.0),
        accuracy_by_tolerance={float(d): accuracy(pred, truth, eta, d) for d in tolerances_cm},
        mse=mse_map(pred, truth),
        ssim=ssim_map(pred, truth),
        balanced_accuracy=balanced_accuracy(pred, truth, eta),
    )
