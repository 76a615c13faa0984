"""Canonical domain types shared by every stage of the pipeline.

All types are frozen dataclasses; array fields are copied on construction
and marked read-only so instances can be shared freely between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import GRID_SPACING_CM, MAGNITUDE_FLOOR, METRICS, STAGES
from .errors import OutOfBoundsError, ValidationError


def _frozen(arr, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def _require_finite(name: str, arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")


def unwrap_phase(phase: np.ndarray) -> np.ndarray:
    """Unwrap along the last axis so adjacent differences lie in [-pi, pi).

    A jump of exactly +pi is corrected downward to -pi; ``np.unwrap`` leaves
    ties untouched, which makes the result depend on rounding.
    """
    phase = np.asarray(phase, dtype=float)
    if phase.shape[-1] < 2:
        return phase.copy()
    d = np.diff(phase, axis=-1)
    wrapped = np.mod(d + np.pi, 2 * np.pi) - np.pi
    correction = np.cumsum(wrapped - d, axis=-1)
    out = phase.copy()
    out[..., 1:] += correction
    return out


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform stepped-frequency grid ``points[k] = f_start + k * f_step``."""

    f_start: float
    f_stop: float
    f_step: float
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("f_start", "f_stop", "f_step"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.f_step <= 0:
            raise ValidationError(f"f_step must be > 0, got {self.f_step}")
        if self.f_start > self.f_stop:
            raise ValidationError("f_start must not exceed f_stop")
        # Tolerate float round-off in (f_stop - f_start) / f_step.
        n = int(math.floor((self.f_stop - self.f_start) / self.f_step + 1e-9)) + 1
        pts = self.f_start + np.arange(n) * self.f_step
        object.__setattr__(self, "points", _frozen(pts, float))

    @classmethod
    def from_count(cls, f_start: float, f_step: float, n_points: int) -> "FrequencyGrid":
        if n_points < 1:
            raise ValidationError(f"n_points must be >= 1, got {n_points}")
        return cls(f_start, f_start + (n_points - 1) * f_step, f_step)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return (
            len(self) == len(other)
            and self.f_start == other.f_start
            and self.f_step == other.f_step
        )

    def __hash__(self):
        return hash((self.f_start, self.f_step, len(self)))


@dataclass(frozen=True)
class SweepRecord:
    """One day's stepped-frequency baseband capture for one pot.

    ``samples`` has shape ``(n_points, block_len)``: one complex baseband
    block per grid frequency.
    """

    pot_id: str
    day: int
    grid: FrequencyGrid
    samples: np.ndarray
    dwell: float
    sample_rate: float

    def __post_init__(self):
        samples = _frozen(self.samples, complex)
        if samples.ndim == 1:
            samples = _frozen(samples.reshape(1, -1))
        object.__setattr__(self, "samples", samples)
        if int(self.day) != self.day or self.day < 1:
            raise ValidationError(f"day must be an integer >= 1, got {self.day}")
        if samples.ndim != 2 or samples.shape[0] != len(self.grid):
            raise ValidationError(
                f"expected one block per grid point ({len(self.grid)}), got shape {samples.shape}"
            )
        if samples.shape[1] == 0:
            raise ValidationError("baseband blocks must be non-empty")
        _require_finite("samples", samples)
        if not (self.dwell > 0 and self.sample_rate > 0):
            raise ValidationError("dwell and sample_rate must be positive")
        if abs(self.dwell * self.sample_rate - samples.shape[1]) > 1 + 1e-9:
            raise ValidationError(
                f"block length {samples.shape[1]} inconsistent with "
                f"dwell*rate = {self.dwell * self.sample_rate:g}"
            )

    @property
    def block_len(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class ChannelSpectrum:
    """Complex CFR with its polar representation.

    Build with :meth:`from_response`; ``floored`` marks points whose
    magnitude was clamped to the guard floor before taking the log.
    """

    grid: FrequencyGrid
    H: np.ndarray
    a_db: np.ndarray
    phase: np.ndarray
    floored: np.ndarray

    @classmethod
    def from_response(cls, grid: FrequencyGrid, H) -> "ChannelSpectrum":
        H = np.asarray(H, dtype=complex)
        if H.shape != (len(grid),):
            raise ValidationError(f"H must have {len(grid)} points, got shape {H.shape}")
        _require_finite("H", H)
        mag = np.abs(H)
        floored = mag < MAGNITUDE_FLOOR
        a_db = 20.0 * np.log10(np.maximum(mag, MAGNITUDE_FLOOR))
        phase = unwrap_phase(np.angle(H))
        return cls(grid, _frozen(H), _frozen(a_db), _frozen(phase), _frozen(floored))

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.H)

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.points


@dataclass(frozen=True)
class MetricHeatmap:
    """One LTE indicator aggregated over a planar grid (``values[row, col]``)."""

    metric_name: str
    values: np.ndarray
    spacing: float = GRID_SPACING_CM

    def __post_init__(self):
        if self.metric_name not in METRICS:
            raise ValidationError(f"unknown metric {self.metric_name!r}; expected one of {METRICS}")
        values = _frozen(self.values, float)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError(f"heatmap values must be a non-empty 2-D array, got shape {values.shape}")
        _require_finite("heatmap values", values)
        if not (math.isfinite(self.spacing) and self.spacing > 0):
            raise ValidationError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "values", values)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class OccupancyMap:
    """Binary ground truth or fused score in [0, 1] over the scan grid."""

    values: np.ndarray
    spacing: float = GRID_SPACING_CM

    def __post_init__(self):
        values = _frozen(self.values, float)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError(f"occupancy values must be a non-empty 2-D array, got shape {values.shape}")
        _require_finite("occupancy values", values)
        if values.min() < 0 or values.max() > 1:
            raise ValidationError("occupancy values must lie in [0, 1]")
        if not (math.isfinite(self.spacing) and self.spacing > 0):
            raise ValidationError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "values", values)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0) | (self.values == 1)))


@dataclass(frozen=True)
class TuberAnnotation:
    """Tuber centroids annotated in photograph pixels plus the image scale.

    Pixel coordinates are relative to the pot centre; ``centroids`` gives the
    same points in centimetres.
    """

    pot_id: str
    scale: float
    pixel_centroids: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"scale must be positive, got {self.scale}")
        px = _frozen(np.asarray(self.pixel_centroids, dtype=float).reshape(-1, 2))
        _require_finite("pixel centroids", px)
        object.__setattr__(self, "pixel_centroids", px)

    @property
    def centroids(self) -> np.ndarray:
        return self.pixel_centroids * self.scale


@dataclass(frozen=True)
class HarvestOutcome:
    pot_id: str
    mass: float  # g
    volume: float  # cm^3

    def __post_init__(self):
        if not (self.mass > 0 and self.volume > 0):
            raise ValidationError("harvest mass and volume must be positive")


def stage_for_day(day: int) -> str:
    """Day-indexed stage bin: 1-15 early, 16-30 middle, 31-45 late."""
    if day < 1 or day > 45:
        raise ValidationError(f"day must be in 1..45, got {day}")
    return STAGES[(int(day) - 1) // 15]


def rasterize_annotation(
    ann: TuberAnnotation,
    spacing: float,
    grid_shape: Sequence[int],
    origin: str = "center",
) -> OccupancyMap:
    """Binary occupancy: a cell is 1 iff at least one centroid falls in it.

    Cells are indexed ``values[iy, ix]`` with ``ix = floor(x / spacing)``.
    With ``origin="center"`` the pot-fixed coordinates are first shifted by
    half the grid extent so the pot centre sits in the middle of the grid;
    ``origin="corner"`` treats coordinates as already non-negative.
    """
    if not (math.isfinite(spacing) and spacing > 0):
        raise ValidationError(f"spacing must be positive, got {spacing}")
    rows, cols = (int(n) for n in grid_shape)
    if rows < 1 or cols < 1:
        raise ValidationError(f"grid_shape must be positive, got {grid_shape}")
    if origin == "center":
        shift = np.array([cols * spacing / 2.0, rows * spacing / 2.0])
    elif origin == "corner":
        shift = np.zeros(2)
    else:
        raise ValidationError(f"origin must be 'center' or 'corner', got {origin!r}")

    values = np.zeros((rows, cols))
    for (x, y) in ann.centroids:
        ix = math.floor((x + shift[0]) / spacing)
        iy = math.floor((y + shift[1]) / spacing)
        if not (0 <= ix < cols and 0 <= iy < rows):
            raise OutOfBoundsError(
                f"centroid ({x:g} cm, {y:g} cm) of pot {ann.pot_id!r} lies outside "
                f"the {rows}x{cols} grid at {spacing:g} cm spacing"
            )
        values[iy, ix] = 1.0
    return OccupancyMap(values, spacing)
