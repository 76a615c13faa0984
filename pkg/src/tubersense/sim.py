"""Physics-guided multilayer channel simulator.

The pot is an ordered stack of planar layers (air gap, pot wall, soil, pot
wall, air gap) crossed once by the direct path. Each layer contributes its
exp(-alpha * d) amplitude loss and sqrt(eps') delay; every interface a
power transmission factor. Two extra mechanisms shape the spectrum:

* a static double bounce inside the soil layer (multiplicative ripple that
  air and day-1 normalization remove), and
* a tuber inclusion of radius ``r`` that replaces ``2 r`` of soil along the
  path with a wetter, lossier mixture and scatters a fraction
  ``s = min(1, gain * (r / lambda_soil)**2)`` of the energy into a path
  delayed by the two-way soil travel time.

The tuber factor is ``T(f) * (1 + s e^{-j 2 pi f dtau}) / (1 + s)``, whose
magnitude never increases with ``r`` while ``s <= 1``, so a growing tuber
only removes energy while adding ripple.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .constants import (
    EPSILON_0,
    MU_0,
    SPEED_OF_LIGHT,
    SWEEP_F_START_HZ,
    SWEEP_F_STEP_HZ,
    SWEEP_F_STOP_HZ,
    SWEEP_RATE_SPS,
)
from .errors import ConfigurationError, DomainError, ParseError, ValidationError
from .model import ChannelSpectrum, FrequencyGrid, SweepRecord

# Short capture used by the simulator; the physical rig dwells 0.2 s.
DEFAULT_BLOCK_LEN = 64
DEFAULT_DWELL_S = DEFAULT_BLOCK_LEN / SWEEP_RATE_SPS


@dataclass(frozen=True)
class ComplexPermittivity:
    """Relative permittivity ``eps' - j (eps'' + sigma / (2 pi f eps0))``.

    ``eps_imag`` is a frequency-independent dielectric loss; ``conductivity``
    (S/m) adds the ionic loss term, which falls as 1/f.
    """

    eps_real: float
    eps_imag: float = 0.0
    conductivity: float = 0.0

    def __post_init__(self):
        if not self.eps_real >= 1:
            raise ValidationError(f"eps_real must be >= 1, got {self.eps_real}")
        if not self.eps_imag >= 0:
            raise ValidationError(f"eps_imag must be >= 0, got {self.eps_imag}")
        if not self.conductivity >= 0:
            raise ValidationError(f"conductivity must be >= 0, got {self.conductivity}")

    def loss(self, f):
        """Total loss factor eps''(f)."""
        f = np.asarray(f, dtype=float)
        return self.eps_imag + self.conductivity / (2 * np.pi * f * EPSILON_0)

    def at(self, f):
        return self.eps_real - 1j * self.loss(f)

    @property
    def is_lossless(self) -> bool:
        return self.eps_imag == 0 and self.conductivity == 0

    def perturbed(self, delta: complex) -> "ComplexPermittivity":
        """Shift the complex value by ``delta`` (real part moves eps')."""
        delta = complex(delta)
        return replace(self, eps_real=self.eps_real + delta.real, eps_imag=self.eps_imag - delta.imag)


class _Lossless:
    """Marker returned by :func:`penetration_depth` for loss-free media."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "LOSSLESS"

    def __reduce__(self):
        return (_Lossless, ())


LOSSLESS = _Lossless()


def _check_freq(f):
    f = np.asarray(f, dtype=float)
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise DomainError("frequency must be positive and finite")
    return f


def propagation_constant(perm: ComplexPermittivity, f):
    """Attenuation (Np/m) and phase (rad/m) constants of a plane wave.

    ``gamma = j 2 pi f sqrt(mu0 eps0 eps_r)``; returns ``(Re gamma, Im gamma)``.
    Works elementwise on array ``f``.
    """
    f = _check_freq(f)
    k0 = 2 * np.pi * f * math.sqrt(MU_0 * EPSILON_0)
    n = np.sqrt(np.asarray(perm.at(f), dtype=complex))  # principal root: Im(n) <= 0
    gamma = 1j * k0 * n
    alpha = np.zeros_like(k0) if perm.is_lossless else gamma.real
    beta = gamma.imag
    if alpha.ndim == 0:
        return float(alpha), float(beta)
    return alpha, beta


def penetration_depth(perm: ComplexPermittivity, f):
    """Power penetration depth ``1 / alpha`` in metres, or ``LOSSLESS``."""
    alpha, _ = propagation_constant(perm, f)
    if np.ndim(alpha) == 0:
        return LOSSLESS if alpha == 0 else 1.0 / alpha
    if np.any(alpha == 0):
        return LOSSLESS
    return 1.0 / alpha


def depth_resolution(bandwidth: float, eps_real: float, c: float = SPEED_OF_LIGHT) -> float:
    """Depth resolution ``c / (2 B sqrt(eps'))`` of a sweep of bandwidth ``B``."""
    if not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    if not eps_real >= 1:
        raise DomainError(f"eps_real must be >= 1, got {eps_real}")
    return c / (2.0 * bandwidth * math.sqrt(eps_real))


def topp_water_content(eps_apparent):
    """Volumetric water content from apparent permittivity (Topp cubic).

    No clamping: values outside the soil calibration range are returned as is.
    """
    e = np.asarray(eps_apparent, dtype=float)
    if np.any(e <= 0):
        raise DomainError("apparent permittivity must be positive")
    theta = 4.3e-6 * e**3 - 5.5e-4 * e**2 + 2.92e-2 * e - 5.3e-2
    return float(theta) if theta.ndim == 0 else theta


# -- paths ------------------------------------------------------------------

@dataclass(frozen=True)
class PathSet:
    """Discrete multipath set ``H(f) = sum_k a_k e^{-j 2 pi f tau_k}``.

    ``gains`` is ``(K,)`` for constant path attenuations or ``(K, N)`` when a
    path's attenuation varies over an N-point grid (layer loss is dispersive).
    """

    gains: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        delays = np.atleast_1d(np.asarray(self.delays, dtype=float))
        if delays.ndim != 1 or delays.size < 1:
            raise ValidationError("a PathSet needs at least one path")
        if gains.shape[0] != delays.size or gains.ndim > 2:
            raise ValidationError(f"gains shape {gains.shape} does not match {delays.size} delays")
        if np.any(delays < 0) or not np.all(np.isfinite(delays)):
            raise ValidationError("path delays must be finite and >= 0")
        gains.flags.writeable = False
        delays.flags.writeable = False
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "delays", delays)

    def __len__(self):
        return self.delays.size

    def __add__(self, other: "PathSet") -> "PathSet":
        a, b = self.gains, other.gains
        if a.ndim != b.ndim:
            n = a.shape[1] if a.ndim == 2 else b.shape[1]
            a = a if a.ndim == 2 else np.repeat(a[:, None], n, axis=1)
            b = b if b.ndim == 2 else np.repeat(b[:, None], n, axis=1)
        return PathSet(np.concatenate([a, b]), np.concatenate([self.delays, other.delays]))

    def cascade(self, other: "PathSet") -> "PathSet":
        """Series connection: every pair of paths combines (gains multiply, delays add)."""
        a = self.gains[:, None, ...]
        b = other.gains[None, :, ...]
        if a.ndim != b.ndim:
            a = a[..., None] if a.ndim < b.ndim else a
            b = b[..., None] if b.ndim < a.ndim else b
        g = a * b
        g = g.reshape((-1,) + g.shape[2:])
        d = (self.delays[:, None] + other.delays[None, :]).ravel()
        return PathSet(g, d)

    def shifted(self, tau0: float) -> "PathSet":
        return PathSet(self.gains, self.delays + tau0)


def synthesize_cfr(paths: PathSet, grid: FrequencyGrid) -> ChannelSpectrum:
    f = grid.points
    phasors = np.exp(-2j * np.pi * np.outer(paths.delays, f))
    gains = paths.gains
    if gains.ndim == 2 and gains.shape[1] != f.size:
        raise ValidationError(f"per-frequency gains cover {gains.shape[1]} points, grid has {f.size}")
    g = gains if gains.ndim == 2 else gains[:, None]
    return ChannelSpectrum.from_response(grid, np.sum(g * phasors, axis=0))


# -- layered medium ----------------------------------------------------------

@dataclass(frozen=True)
class Layer:
    name: str
    thickness: float  # m
    permittivity: ComplexPermittivity

    def __post_init__(self):
        if not (math.isfinite(self.thickness) and self.thickness > 0):
            raise ConfigurationError(f"layer {self.name!r}: thickness must be > 0, got {self.thickness}")


@dataclass(frozen=True)
class LayeredMedium:
    """Air / pot wall / soil stack with an optional tuber inclusion in the soil.

    The inclusion's permittivity is a linear volumetric mix of soil and tuber
    tissue weighted by ``tuber_water_fraction``.
    """

    layers: tuple
    tuber_permittivity: ComplexPermittivity | None = None
    tuber_radius: float = 0.0
    tuber_water_fraction: float = 1.0
    scatter_gain: float = 0.5

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 3:
            raise ConfigurationError("a layered medium needs at least 3 layers")
        soils = [ly for ly in layers if ly.name == "soil"]
        if len(soils) != 1:
            raise ConfigurationError("exactly one layer must be named 'soil'")
        if not 0 <= self.tuber_water_fraction <= 1:
            raise ConfigurationError("tuber_water_fraction must lie in [0, 1]")
        if self.tuber_radius < 0:
            raise ConfigurationError("tuber_radius must be >= 0")
        if self.scatter_gain < 0:
            raise ConfigurationError("scatter_gain must be >= 0")
        self.check_radius(self.tuber_radius)

    @property
    def soil(self) -> Layer:
        return next(ly for ly in self.layers if ly.name == "soil")

    @property
    def soil_index(self) -> int:
        return next(i for i, ly in enumerate(self.layers) if ly.name == "soil")

    @property
    def total_thickness(self) -> float:
        return sum(ly.thickness for ly in self.layers)

    def check_radius(self, radius: float) -> None:
        if radius > self.soil.thickness:
            raise ConfigurationError(
                f"tuber radius {radius:g} m exceeds soil layer thickness {self.soil.thickness:g} m"
            )

    def inclusion_permittivity(self, tuber: ComplexPermittivity | None = None) -> ComplexPermittivity:
        tuber = tuber or self.tuber_permittivity
        soil = self.soil.permittivity
        if tuber is None:
            return soil
        w = self.tuber_water_fraction
        return ComplexPermittivity(
            soil.eps_real + w * (tuber.eps_real - soil.eps_real),
            max(soil.eps_imag + w * (tuber.eps_imag - soil.eps_imag), 0.0),
            max(soil.conductivity + w * (tuber.conductivity - soil.conductivity), 0.0),
        )

    def with_radius(self, radius: float) -> "LayeredMedium":
        return replace(self, tuber_radius=radius)


def _interface_transmission(e1, e2):
    """Normal-incidence power-transmission amplitude sqrt(1 - |Gamma|^2)."""
    n1, n2 = np.sqrt(e1), np.sqrt(e2)
    gamma = (n1 - n2) / (n1 + n2)
    return np.sqrt(np.clip(1.0 - np.abs(gamma) ** 2, 0.0, 1.0)), gamma


def medium_paths(medium: LayeredMedium, freqs, radius: float | None = None,
                 tuber: ComplexPermittivity | None = None) -> PathSet:
    """Per-frequency PathSet of the pot stack with a tuber of ``radius``."""
    f = _check_freq(freqs)
    r = medium.tuber_radius if radius is None else radius
    medium.check_radius(r)

    eps = [np.broadcast_to(ly.permittivity.at(f), f.shape) for ly in medium.layers]
    boundaries = [np.ones_like(f, dtype=complex)] + eps + [np.ones_like(f, dtype=complex)]
    amp = np.ones_like(f)
    for e1, e2 in zip(boundaries[:-1], boundaries[1:]):
        t, _ = _interface_transmission(e1, e2)
        amp = amp * t
    tau0 = 0.0
    for ly in medium.layers:
        alpha, _ = propagation_constant(ly.permittivity, f)
        amp = amp * np.exp(-alpha * ly.thickness)
        tau0 += ly.thickness * math.sqrt(ly.permittivity.eps_real) / SPEED_OF_LIGHT
    direct = PathSet(amp[None, :], [tau0])

    # Static double bounce between the two soil boundaries.
    k = medium.soil_index
    soil = medium.soil
    alpha_s, _ = propagation_constant(soil.permittivity, f)
    _, g_in = _interface_transmission(eps[k], boundaries[k])
    _, g_out = _interface_transmission(eps[k], boundaries[k + 2])
    rho = g_in * g_out * np.exp(-2 * alpha_s * soil.thickness)
    two_way = 2 * soil.thickness * math.sqrt(soil.permittivity.eps_real) / SPEED_OF_LIGHT
    echo = PathSet(np.vstack([np.ones_like(f), rho]), [0.0, two_way])
    paths = direct.cascade(echo)

    if r > 0 and (tuber is not None or medium.tuber_permittivity is not None):
        incl = medium.inclusion_permittivity(tuber)
        alpha_i, _ = propagation_constant(incl, f)
        # A less lossy inclusion is treated as loss-neutral.
        excess = np.maximum(alpha_i - alpha_s, 0.0)
        transmission = np.exp(-excess * 2 * r)
        extra_delay = max(2 * r * (math.sqrt(incl.eps_real) - math.sqrt(soil.permittivity.eps_real)), 0.0)
        wavelength = SPEED_OF_LIGHT / (f * math.sqrt(soil.permittivity.eps_real))
        s = np.minimum(1.0, medium.scatter_gain * (r / wavelength) ** 2)
        tuber_paths = PathSet(
            np.vstack([transmission / (1 + s), transmission * s / (1 + s)]),
            [extra_delay / SPEED_OF_LIGHT, extra_delay / SPEED_OF_LIGHT + two_way],
        )
        paths = paths.cascade(tuber_paths)
    return paths


def frontend_paths(ripple: float, delay: float) -> PathSet:
    """Static transceiver response ``1 + ripple e^{-j 2 pi f delay}``."""
    if ripple == 0:
        return PathSet([1.0], [0.0])
    return PathSet([1.0, ripple], [0.0, delay])


# -- sweep generation --------------------------------------------------------

def _baseband_blocks(H, block_len, rate, cfo_hz, noise_sd, rng):
    t = np.arange(block_len) / rate
    blocks = H[:, None] * np.exp(2j * np.pi * cfo_hz * t)[None, :]
    if noise_sd > 0:
        noise = rng.standard_normal((2,) + blocks.shape)
        blocks = blocks + noise_sd / math.sqrt(2) * (noise[0] + 1j * noise[1])
    return blocks


def _block_len(dwell, rate):
    n = int(round(dwell * rate))
    if n < 1:
        raise ConfigurationError(f"dwell*rate = {dwell * rate:g} gives an empty block")
    return n


def simulate_growth_series(
    medium: LayeredMedium,
    growth,
    grid: FrequencyGrid,
    noise_sd: float = 0.0,
    seed: int = 0,
    *,
    pot_id: str = "pot",
    dwell: float = DEFAULT_DWELL_S,
    sample_rate: float = SWEEP_RATE_SPS,
    cfo_hz: float = 0.0,
    frontend: PathSet | None = None,
    stream: int = 0,
) -> list[SweepRecord]:
    """Daily sweeps of one pot as its tuber grows along ``growth``.

    ``growth`` maps day -> radius (m), or is a sequence of ``(day, radius)``
    pairs. Noise for each day is drawn from a generator keyed by
    ``(seed, stream, day)`` so days can be simulated independently.
    """
    schedule = sorted(dict(growth).items()) if isinstance(growth, Mapping) else sorted(
        (int(d), float(r)) for d, r in growth
    )
    if not schedule:
        raise ConfigurationError("growth schedule is empty")
    days = [d for d, _ in schedule]
    radii = [r for _, r in schedule]
    if days[0] < 1 or len(set(days)) != len(days):
        raise ConfigurationError("growth days must be distinct integers >= 1")
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ConfigurationError("tuber radii must be nondecreasing over days")
    for r in radii:
        if r < 0:
            raise ConfigurationError("tuber radius must be >= 0")
        medium.check_radius(r)
    if noise_sd < 0:
        raise ConfigurationError("noise_sd must be >= 0")

    n = _block_len(dwell, sample_rate)
    fe = frontend or PathSet([1.0], [0.0])
    records = []
    for day, radius in schedule:
        paths = fe.cascade(medium_paths(medium, grid.points, radius))
        H = synthesize_cfr(paths, grid).H
        rng = np.random.default_rng([int(seed), int(stream), int(day)])
        blocks = _baseband_blocks(H, n, sample_rate, cfo_hz, noise_sd, rng)
        records.append(SweepRecord(pot_id, day, grid, blocks, dwell, sample_rate))
    return records


def simulate_air_reference(
    grid: FrequencyGrid,
    separation: float,
    noise_sd: float = 0.0,
    seed: int = 0,
    *,
    dwell: float = DEFAULT_DWELL_S,
    sample_rate: float = SWEEP_RATE_SPS,
    cfo_hz: float = 0.0,
    frontend: PathSet | None = None,
) -> SweepRecord:
    """Sweep with the pot removed: free-space path over the antenna separation."""
    fe = frontend or PathSet([1.0], [0.0])
    paths = fe.cascade(PathSet([1.0], [separation / SPEED_OF_LIGHT]))
    H = synthesize_cfr(paths, grid).H
    rng = np.random.default_rng([int(seed), 2**31 - 1, 0])
    blocks = _baseband_blocks(H, _block_len(dwell, sample_rate), sample_rate, cfo_hz, noise_sd, rng)
    return SweepRecord("air", 1, grid, blocks, dwell, sample_rate)


# -- band selection -----------------------------------------------------------

@dataclass(frozen=True)
class BandScore:
    freq: float
    psi_p: float  # soil penetration depth relative to the lowest frequency
    psi_a: float  # |d|H| / d eps_tuber|

    @property
    def relative_activity(self) -> float:
        return self.psi_a / self.psi_p


def band_scores(medium: LayeredMedium, grid: FrequencyGrid, perturbation: complex = 0.5,
                radius: float | None = None) -> list[BandScore]:
    """Penetration and tuber-permittivity sensitivity across ``grid``.

    ``psi_p`` is the soil penetration depth normalized to its value at the
    first grid point. ``psi_a`` is the central finite difference of the
    medium's CFR magnitude with respect to the tuber permittivity, using
    step ``perturbation``.
    """
    if perturbation == 0:
        raise ConfigurationError("perturbation must be nonzero")
    soil = medium.soil
    if soil.permittivity.is_lossless:
        raise ConfigurationError("band scores need a lossy soil layer")
    if medium.tuber_permittivity is None:
        raise ConfigurationError("band scores need a tuber permittivity")
    f = grid.points
    alpha, _ = propagation_constant(soil.permittivity, f)
    depth = 1.0 / np.atleast_1d(alpha)
    psi_p = depth / depth[0]

    tuber = medium.tuber_permittivity
    up = synthesize_cfr(medium_paths(medium, f, radius, tuber.perturbed(perturbation)), grid)
    dn = synthesize_cfr(medium_paths(medium, f, radius, tuber.perturbed(-perturbation)), grid)
    psi_a = np.abs((up.magnitude - dn.magnitude) / (2 * abs(complex(perturbation))))
    return [BandScore(float(fk), float(p), float(a)) for fk, p, a in zip(f, psi_p, psi_a)]


# -- scenarios ----------------------------------------------------------------

def default_layers(soil: ComplexPermittivity | None = None) -> tuple:
    """Reference pot geometry: 10 in antenna separation, 8 in pot, 5 mm walls."""
    wall = ComplexPermittivity(2.3, 0.01)
    soil = soil or ComplexPermittivity(12.0, 0.3, 0.02)
    return (
        Layer("air", 0.0254, ComplexPermittivity(1.0)),
        Layer("wall", 0.005, wall),
        Layer("soil", 0.1932, soil),
        Layer("wall", 0.005, wall),
        Layer("air", 0.0254, ComplexPermittivity(1.0)),
    )


def default_medium(radius: float = 0.005) -> LayeredMedium:
    return LayeredMedium(
        default_layers(),
        tuber_permittivity=ComplexPermittivity(55.0, 15.0),
        tuber_radius=radius,
        tuber_water_fraction=0.4,
        scatter_gain=0.5,
    )


@dataclass(frozen=True)
class PotScenario:
    pot_id: str
    medium: LayeredMedium
    schedule: tuple  # ((day, radius_m), ...)


@dataclass(frozen=True)
class Scenario:
    grid: FrequencyGrid
    pots: tuple
    noise_sd: float = 0.0
    seed: int = 0
    dwell: float = DEFAULT_DWELL_S
    sample_rate: float = SWEEP_RATE_SPS
    cfo_hz: float = 0.0
    frontend_ripple: float = 0.0
    frontend_delay: float = 0.0
    separation: float = 0.254
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def frontend(self) -> PathSet:
        return frontend_paths(self.frontend_ripple, self.frontend_delay)


def _scenario_error(msg, field_name, path):
    return ParseError(msg, path=path, field=field_name)


def _perm_from(d, where, path) -> ComplexPermittivity:
    try:
        if "eps_real" not in d:
            raise KeyError("eps_real")
        return ComplexPermittivity(
            float(d["eps_real"]),
            float(d.get("eps_imag", 0.0)),
            float(d.get("sigma_s_per_m", 0.0)),
        )
    except KeyError as exc:
        raise _scenario_error(f"missing key {exc}", where, path) from None
    except (TypeError, ValueError) as exc:
        raise _scenario_error(str(exc), where, path) from None


def _schedule_from(g, where, path):
    if isinstance(g, list):
        try:
            return tuple((int(d), float(r)) for d, r in g)
        except (TypeError, ValueError):
            raise _scenario_error("schedule entries must be [day, radius_m]", where, path) from None
    if isinstance(g, dict):
        try:
            days = int(g["days"])
            r0, r1 = float(g["radius_start_m"]), float(g["radius_end_m"])
        except KeyError as exc:
            raise _scenario_error(f"missing key {exc}", where, path) from None
        if days < 1:
            raise _scenario_error("days must be >= 1", where, path)
        radii = np.linspace(r0, r1, days) if days > 1 else np.array([r0])
        return tuple((d + 1, float(r)) for d, r in enumerate(radii))
    raise _scenario_error("growth must be a list of [day, radius_m] or a ramp object", where, path)


_SCENARIO_KEYS = {"description", "grid", "dwell_s", "rate_sps", "noise_sd", "cfo_hz", "seed",
                  "antenna_separation_m", "frontend", "pots"}
_GRID_KEYS = {"f_start_hz", "f_stop_hz", "f_step_hz"}
_FRONTEND_KEYS = {"ripple", "delay_s"}


def _reject_unknown(d, allowed, where, path):
    # A misspelt key would otherwise fall back silently to its default.
    if isinstance(d, dict):
        extra = sorted(set(d) - allowed)
        if extra:
            field = f"{where}.{extra[0]}" if where else extra[0]
            raise _scenario_error(f"unknown key (allowed: {sorted(allowed)})", field, path)


def scenario_from_dict(doc: dict, path=None) -> Scenario:
    """Validate a parsed scenario document; errors name the offending field."""
    if not isinstance(doc, dict):
        raise _scenario_error("scenario must be a JSON object", None, path)
    _reject_unknown(doc, _SCENARIO_KEYS, None, path)
    _reject_unknown(doc.get("grid", {}), _GRID_KEYS, "grid", path)
    _reject_unknown(doc.get("frontend", {}), _FRONTEND_KEYS, "frontend", path)
    try:
        g = doc.get("grid", {})
        grid = FrequencyGrid(
            float(g.get("f_start_hz", SWEEP_F_START_HZ)),
            float(g.get("f_stop_hz", SWEEP_F_STOP_HZ)),
            float(g.get("f_step_hz", SWEEP_F_STEP_HZ)),
        )
    except (TypeError, ValueError) as exc:
        raise _scenario_error(str(exc), "grid", path) from None

    pots_doc = doc.get("pots")
    if not isinstance(pots_doc, list) or not pots_doc:
        raise _scenario_error("'pots' must be a non-empty list", "pots", path)
    pots = []
    for i, p in enumerate(pots_doc):
        where = f"pots[{i}]"
        if not isinstance(p, dict) or "pot" not in p:
            raise _scenario_error("each pot needs a 'pot' id", where, path)
        layers_doc = p.get("layers")
        if layers_doc is None:
            layers = default_layers(_perm_from(p["soil"], f"{where}.soil", path) if "soil" in p else None)
        else:
            if not isinstance(layers_doc, list):
                raise _scenario_error("'layers' must be a list", f"{where}.layers", path)
            layers = []
            for j, ly in enumerate(layers_doc):
                lw = f"{where}.layers[{j}]"
                try:
                    layers.append(Layer(str(ly["name"]), float(ly["thickness_m"]), _perm_from(ly, lw, path)))
                except KeyError as exc:
                    raise _scenario_error(f"missing key {exc}", lw, path) from None
                except (TypeError, ValueError) as exc:
                    raise _scenario_error(str(exc), lw, path) from None
        tuber_doc = p.get("tuber")
        try:
            medium = LayeredMedium(
                layers,
                tuber_permittivity=_perm_from(tuber_doc, f"{where}.tuber", path) if tuber_doc else None,
                tuber_water_fraction=float((tuber_doc or {}).get("water_fraction", 1.0)),
                scatter_gain=float((tuber_doc or {}).get("scatter_gain", 0.5)),
            )
        except (TypeError, ValueError) as exc:
            raise _scenario_error(str(exc), where, path) from None
        if "growth" not in p:
            raise _scenario_error("missing key 'growth'", where, path)
        schedule = _schedule_from(p["growth"], f"{where}.growth", path)
        pots.append(PotScenario(str(p["pot"]), medium, schedule))

    try:
        sc = Scenario(
            grid=grid,
            pots=tuple(pots),
            noise_sd=float(doc.get("noise_sd", 0.0)),
            seed=int(doc.get("seed", 0)),
            dwell=float(doc.get("dwell_s", DEFAULT_DWELL_S)),
            sample_rate=float(doc.get("rate_sps", SWEEP_RATE_SPS)),
            cfo_hz=float(doc.get("cfo_hz", 0.0)),
            frontend_ripple=float(doc.get("frontend", {}).get("ripple", 0.0)),
            frontend_delay=float(doc.get("frontend", {}).get("delay_s", 0.0)),
            separation=float(doc.get("antenna_separation_m", 0.254)),
            source=doc,
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise _scenario_error(str(exc), "scenario", path) from None
    if sc.noise_sd < 0:
        raise _scenario_error("must be >= 0", "noise_sd", path)
    if sc.dwell <= 0 or sc.sample_rate <= 0:
        raise _scenario_error("must be positive", "dwell_s/rate_sps", path)
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from None
    return scenario_from_dict(doc, path)


def bundled_scenario_path() -> Path:
    return Path(__file__).with_name("data") / "growth_scenario.json"


def simulate_scenario(sc: Scenario):
    """Run every pot of ``sc``; returns ``(air_record, {pot_id: [records]})``."""
    air = simulate_air_reference(
        sc.grid, sc.separation, sc.noise_sd, sc.seed,
        dwell=sc.dwell, sample_rate=sc.sample_rate, cfo_hz=sc.cfo_hz, frontend=sc.frontend,
    )
    out = {}
    for i, pot in enumerate(sc.pots):
        out[pot.pot_id] = simulate_growth_series(
            pot.medium, pot.schedule, sc.grid, sc.noise_sd, sc.seed,
            pot_id=pot.pot_id, dwell=sc.dwell, sample_rate=sc.sample_rate,
            cfo_hz=sc.cfo_hz, frontend=sc.frontend, stream=i,
        )
    return air, out
