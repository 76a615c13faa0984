import numpy as np
import pytest

from tubersense.constants import STAGES
from tubersense.features import feature_series
from tubersense.model import ChannelSpectrum, FrequencyGrid
from tubersense.sim import bundled_scenario_path, load_scenario, simulate_scenario


@pytest.fixture(scope="session")
def growth_run():
    """Bundled 4-pot x 45-day scenario, simulated once per session."""
    sc = load_scenario(bundled_scenario_path())
    air, pots = simulate_scenario(sc)
    records = [r for recs in pots.values() for r in recs]
    return {"scenario": sc, "air": air, "pots": pots, "features": feature_series(records, air)}


@pytest.fixture
def band_grid():
    return FrequencyGrid(2.0e9, 3.5e9, 10e6)


def spectrum_from_mag(grid, mag, phase=None):
    phase = np.zeros(len(grid)) if phase is None else phase
    return ChannelSpectrum.from_response(grid, np.asarray(mag) * np.exp(1j * np.asarray(phase)))


CENTERS = np.array([[0, 0, 0, 0], [10, 0, 0, 0], [5, 5 * np.sqrt(3), 0, 0]], dtype=float)


def clusters(seed, per_class=15, sd=0.01, pots=4):
    """Three clusters with pairwise centre distance 10, spread across pots."""
    rng = np.random.default_rng(seed)
    X, y, g = [], [], []
    for p in range(pots):
        for k, c in enumerate(CENTERS):
            X.append(c + sd * rng.standard_normal((per_class, 4)))
            y += [STAGES[k]] * per_class
            g += [f"P{p}"] * per_class
    return np.vstack(X), y, g
