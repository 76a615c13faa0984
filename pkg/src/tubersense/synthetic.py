"""Planted LTE heatmaps with known tuber occupancy, for fusion checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import GRID_SPACING_CM, METRICS
from .model import MetricHeatmap, OccupancyMap

# Raw-unit offset and scale per metric so the maps look like their indicator.
_METRIC_UNITS = {
    "RSRP": (-95.0, 4.0),
    "SINR": (12.0, 3.0),
    "MCS": (15.0, 2.5),
    "throughput": (20.0, 5.0),
    "BLER": (0.1, 0.02),
}
DEFAULT_INFORMATIVENESS = (0.8, 0.7, 0.6, 0.5, 0.4)


@dataclass(frozen=True)
class PlantedGrid:
    maps: tuple  # raw MetricHeatmaps in METRICS order
    truth: OccupancyMap
    informativeness: tuple


def planted_truth(shape=(10, 20), n_tubers: int = 4, radius_cells: float = 1.6,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    rng = rng or np.random.default_rng()
    rows, cols = shape
    iy, ix = np.mgrid[0:rows, 0:cols]
    truth = np.zeros(shape)
    for _ in range(n_tubers):
        cy, cx = rng.uniform(1, rows - 1), rng.uniform(1, cols - 1)
        truth[(iy - cy) ** 2 + (ix - cx) ** 2 <= radius_cells**2] = 1.0
    return truth


def planted_grid(seed: int = 0, shape=(10, 20), informativeness=DEFAULT_INFORMATIVENESS,
                 noise_sd: float = 1.0, n_tubers: int = 4) -> PlantedGrid:
    """Metric j carries ``s_j * (2y - 1)`` plus white noise, in raw units."""
    rng = np.random.default_rng(seed)
    truth = planted_truth(shape, n_tubers, rng=rng)
    signal = 2 * truth - 1
    maps = []
    for name, s in zip(METRICS, informativeness):
        offset, scale = _METRIC_UNITS[name]
        core = s * signal + noise_sd * rng.standard_normal(shape)
        maps.append(MetricHeatmap(name, offset + scale * core, GRID_SPACING_CM))
    return PlantedGrid(tuple(maps), OccupancyMap(truth, GRID_SPACING_CM), tuple(informativeness))
