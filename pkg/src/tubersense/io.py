"""Line-oriented text formats for sweeps, heatmaps, annotations and tables.

Every float is written with ``repr`` so that ``load(save(x))`` is lossless
and ``save(load(path))`` reproduces a canonically written file byte for byte.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError
from .model import (
    ChannelSpectrum,
    FrequencyGrid,
    HarvestOutcome,
    MetricHeatmap,
    OccupancyMap,
    SweepRecord,
    TuberAnnotation,
)

SWEEP_HEADER = ("pot", "day", "f_start_hz", "f_step_hz", "n_points", "dwell_s", "rate_sps")
HEATMAP_HEADER = ("metric", "rows", "cols", "spacing_cm")
ANNOTATION_HEADER = ("pot", "scale_cm_per_px")
SPECTRUM_COLUMNS = "f_hz,re,im,a_db,phase_rad"
OCCUPANCY_METRIC = "occupancy"

FEATURE_COLUMNS = ("pot", "day", "bai_db", "hl", "slope_db_per_hz", "ripple_var")
FIT_COLUMNS = ("w_rsrp", "w_sinr", "w_mcs", "w_rate", "w_bler", "train_loss", "iterations", "converged")
HARVEST_COLUMNS = ("pot", "mass_g", "volume_cm3")


def fmt(x: float) -> str:
    return repr(float(x))


class _Reader:
    """Cursor over the lines of one file that knows how to complain."""

    def __init__(self, path):
        self.path = Path(path)
        self.lines = self.path.read_text().splitlines()
        self.pos = 0

    def error(self, message, field=None, line=None):
        return ParseError(message, path=self.path, line=line or self.pos, field=field)

    def header(self, keys: Sequence[str]) -> dict:
        out = {}
        for key in keys:
            if self.pos >= len(self.lines):
                raise self.error("unexpected end of file in header", field=key, line=self.pos + 1)
            raw = self.lines[self.pos]
            self.pos += 1
            name, sep, value = raw.partition("=")
            if not sep or name.strip() != key:
                raise self.error(f"expected '{key}=<value>', got {raw!r}", field=key)
            out[key] = value.strip()
        return out

    def next_line(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise self.error(f"unexpected end of file: missing {what}", line=self.pos + 1)
        raw = self.lines[self.pos]
        self.pos += 1
        return raw

    def remaining(self) -> list[str]:
        rest = [ln for ln in self.lines[self.pos:] if ln.strip()]
        return rest

    def to_float(self, text: str, field: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise self.error(f"not a number: {text!r}", field=field) from None
        if not math.isfinite(value):
            raise self.error(f"non-finite value {text!r}", field=field)
        return value

    def to_int(self, text: str, field: str) -> int:
        try:
            return int(text)
        except ValueError:
            raise self.error(f"not an integer: {text!r}", field=field) from None

    def floats(self, raw: str, field: str) -> np.ndarray:
        parts = raw.split(",")
        return np.array([self.to_float(p, field) for p in parts], dtype=float)


def _positive(reader: _Reader, value: float, field: str) -> float:
    if value <= 0:
        raise reader.error(f"must be positive, got {value!r}", field=field)
    return value


# -- sweeps -----------------------------------------------------------------

def save_sweep(record: SweepRecord, path) -> None:
    lines = [
        f"pot={record.pot_id}",
        f"day={int(record.day)}",
        f"f_start_hz={fmt(record.grid.f_start)}",
        f"f_step_hz={fmt(record.grid.f_step)}",
        f"n_points={len(record.grid)}",
        f"dwell_s={fmt(record.dwell)}",
        f"rate_sps={fmt(record.sample_rate)}",
    ]
    for block in record.samples:
        pairs = np.empty(2 * block.size)
        pairs[0::2] = block.real
        pairs[1::2] = block.imag
        lines.append(",".join(map(repr, pairs.tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def load_sweep(path) -> SweepRecord:
    r = _Reader(path)
    h = r.header(SWEEP_HEADER)
    day = r.to_int(h["day"], "day")
    if day < 1:
        raise r.error("day must be >= 1", field="day", line=2)
    f_start = r.to_float(h["f_start_hz"], "f_start_hz")
    f_step = _positive(r, r.to_float(h["f_step_hz"], "f_step_hz"), "f_step_hz")
    n_points = r.to_int(h["n_points"], "n_points")
    if n_points < 1:
        raise r.error("n_points must be >= 1", field="n_points", line=5)
    dwell = _positive(r, r.to_float(h["dwell_s"], "dwell_s"), "dwell_s")
    rate = _positive(r, r.to_float(h["rate_sps"], "rate_sps"), "rate_sps")

    blocks = []
    for k in range(n_points):
        raw = r.next_line(f"block {k + 1} of {n_points}")
        vals = r.floats(raw, f"block[{k}]")
        if vals.size == 0 or vals.size % 2:
            raise r.error("block must hold an even, non-zero count of re,im values", field=f"block[{k}]")
        blocks.append(vals[0::2] + 1j * vals[1::2])
    if r.remaining():
        raise r.error(f"more than the declared {n_points} blocks", line=r.pos + 1)
    lengths = {b.size for b in blocks}
    if len(lengths) != 1:
        raise r.error(f"blocks differ in length: {sorted(lengths)}")
    grid = FrequencyGrid.from_count(f_start, f_step, n_points)
    try:
        return SweepRecord(h["pot"], day, grid, np.vstack(blocks), dwell, rate)
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from exc


# -- heatmaps / occupancy ---------------------------------------------------

def _save_grid(metric: str, values: np.ndarray, spacing: float, path) -> None:
    rows, cols = values.shape
    lines = [f"metric={metric}", f"rows={rows}", f"cols={cols}", f"spacing_cm={fmt(spacing)}"]
    lines += [",".join(map(repr, row.tolist())) for row in np.asarray(values, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


def _load_grid(path):
    r = _Reader(path)
    h = r.header(HEATMAP_HEADER)
    rows = r.to_int(h["rows"], "rows")
    cols = r.to_int(h["cols"], "cols")
    if rows < 1 or cols < 1:
        raise r.error("rows and cols must be >= 1", field="rows")
    spacing = _positive(r, r.to_float(h["spacing_cm"], "spacing_cm"), "spacing_cm")
    data = []
    for i in range(rows):
        raw = r.next_line(f"row {i + 1} of {rows} declared")
        vals = r.floats(raw, f"row[{i}]")
        if vals.size != cols:
            raise r.error(f"expected {cols} columns, got {vals.size}", field=f"row[{i}]")
        data.append(vals)
    if r.remaining():
        raise r.error(f"more than the declared {rows} rows", line=r.pos + 1)
    return h["metric"], np.vstack(data), spacing, r


def save_heatmap(hm: MetricHeatmap, path) -> None:
    _save_grid(hm.metric_name, hm.values, hm.spacing, path)


def load_heatmap(path) -> MetricHeatmap:
    metric, values, spacing, r = _load_grid(path)
    try:
        return MetricHeatmap(metric, values, spacing)
    except ValueError as exc:
        raise r.error(str(exc), field="metric", line=1) from exc


def save_occupancy(occ: OccupancyMap, path) -> None:
    _save_grid(OCCUPANCY_METRIC, occ.values, occ.spacing, path)


def load_occupancy(path) -> OccupancyMap:
    metric, values, spacing, r = _load_grid(path)
    if metric != OCCUPANCY_METRIC:
        raise r.error(f"expected metric={OCCUPANCY_METRIC}, got {metric!r}", field="metric", line=1)
    try:
        return OccupancyMap(values, spacing)
    except ValueError as exc:
        raise r.error(str(exc)) from exc


# -- annotations ------------------------------------------------------------

def save_annotation(ann: TuberAnnotation, path) -> None:
    lines = [f"pot={ann.pot_id}", f"scale_cm_per_px={fmt(ann.scale)}"]
    lines += [f"{fmt(px)},{fmt(py)}" for px, py in ann.pixel_centroids]
    Path(path).write_text("\n".join(lines) + "\n")


def load_annotation(path) -> TuberAnnotation:
    r = _Reader(path)
    h = r.header(ANNOTATION_HEADER)
    scale = _positive(r, r.to_float(h["scale_cm_per_px"], "scale_cm_per_px"), "scale_cm_per_px")
    pts = []
    for raw in r.remaining():
        r.pos += 1
        vals = r.floats(raw, "centroid")
        if vals.size != 2:
            raise r.error(f"expected 'px,py', got {raw!r}", field="centroid")
        pts.append(vals)
    return TuberAnnotation(h["pot"], scale, np.array(pts).reshape(-1, 2))


# -- spectra ----------------------------------------------------------------

def save_spectrum(spec: ChannelSpectrum, path) -> None:
    g = spec.grid
    lines = [f"f_start_hz={fmt(g.f_start)}", f"f_step_hz={fmt(g.f_step)}", f"n_points={len(g)}", SPECTRUM_COLUMNS]
    for f, h, a, p in zip(g.points, spec.H, spec.a_db, spec.phase):
        lines.append(",".join(fmt(v) for v in (f, h.real, h.imag, a, p)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_spectrum(path) -> ChannelSpectrum:
    r = _Reader(path)
    h = r.header(("f_start_hz", "f_step_hz", "n_points"))
    grid = FrequencyGrid.from_count(
        r.to_float(h["f_start_hz"], "f_start_hz"),
        _positive(r, r.to_float(h["f_step_hz"], "f_step_hz"), "f_step_hz"),
        r.to_int(h["n_points"], "n_points"),
    )
    if r.next_line("column header").strip() != SPECTRUM_COLUMNS:
        raise r.error(f"expected column header {SPECTRUM_COLUMNS!r}")
    H = []
    for k in range(len(grid)):
        vals = r.floats(r.next_line(f"row {k + 1}"), f"row[{k}]")
        if vals.size != 5:
            raise r.error("expected 5 columns", field=f"row[{k}]")
        H.append(vals[1] + 1j * vals[2])
    return ChannelSpectrum.from_response(grid, np.array(H))


# -- tables -----------------------------------------------------------------

def write_table(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_table(path, columns: Sequence[str] | None = None) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if columns is not None:
            missing = [c for c in columns if c not in (reader.fieldnames or [])]
            if missing:
                raise ParseError(f"missing columns {missing}", path=path, line=1)
        return list(reader)


def save_harvest(outcomes: Sequence[HarvestOutcome], path) -> None:
    write_table(path, HARVEST_COLUMNS, [(o.pot_id, float(o.mass), float(o.volume)) for o in outcomes])


def load_harvest(path) -> list[HarvestOutcome]:
    out = []
    for i, row in enumerate(read_table(path, HARVEST_COLUMNS), start=2):
        try:
            mass, volume = float(row["mass_g"]), float(row["volume_cm3"])
            if not (math.isfinite(mass) and math.isfinite(volume)):
                raise ValueError("non-finite value")
            out.append(HarvestOutcome(row["pot"], mass, volume))
        except ValueError as exc:
            raise ParseError(str(exc), path=path, line=i) from exc
    return out


def save_features(features, path) -> None:
    write_table(path, FEATURE_COLUMNS, [
        (fv.pot_id, int(fv.day), float(fv.bai), float(fv.hl), float(fv.slope), float(fv.ripple_var))
        for fv in features
    ])


def load_features(path):
    from .features import FeatureVector

    out = []
    for i, row in enumerate(read_table(path, FEATURE_COLUMNS), start=2):
        try:
            vals = [float(row[c]) for c in FEATURE_COLUMNS[2:]]
            if not all(math.isfinite(v) for v in vals):
                raise ValueError("non-finite feature value")
            out.append(FeatureVector(row["pot"], int(row["day"]), *vals))
        except ValueError as exc:
            raise ParseError(str(exc), path=path, line=i) from exc
    return out
