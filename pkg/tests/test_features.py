from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import spectrum_from_mag
from tubersense.errors import BandRangeError, ParameterError, ValidationError
from tubersense.features import (
    FeatureVector,
    WorkingBand,
    bai,
    band_indices,
    compute_features,
    feature_series,
    hl_ratio,
    ripple_variance,
    sliding_median,
    spectral_slope,
)
from tubersense.model import ChannelSpectrum, FrequencyGrid
from tubersense.sim import (
    PathSet,
    bundled_scenario_path,
    default_medium,
    load_scenario,
    simulate_growth_series,
    simulate_scenario,
    synthesize_cfr,
)

BAND = WorkingBand()


class TestGoldens:
    def test_flat_spectrum(self, band_grid):
        s = spectrum_from_mag(band_grid, np.full(len(band_grid), 0.37))
        fv = compute_features(s)
        assert abs(fv.bai) <= 1e-12
        assert abs(fv.slope) <= 1e-12
        assert abs(fv.ripple_var) <= 1e-12
        assert abs(fv.hl - 1.0) <= 1e-12

    def test_linear_magnitude_hl(self, band_grid):
        s = spectrum_from_mag(band_grid, band_grid.points / 1e9)
        assert hl_ratio(s) == pytest.approx(2.34375 / 1.78125, abs=1e-12)
        assert abs(hl_ratio(s) - 1.3158) <= 1e-4

    def test_ramp_bai(self, band_grid):
        f = band_grid.points
        a_db = -3.0 * (f - f[0]) / (f[-1] - f[0])
        s = spectrum_from_mag(band_grid, 10 ** (a_db / 20))
        assert abs(bai(s) - 1.5) <= 1e-9

    def test_slope(self, band_grid):
        f = band_grid.points
        s = spectrum_from_mag(band_grid, 10 ** (-2.0 * (f - 2e9) / 1e9 / 20))
        assert spectral_slope(s) == pytest.approx(-2e-9, rel=1e-9)

    def test_two_path_ripple_exceeds_single(self, band_grid):
        one = synthesize_cfr(PathSet([1.0], [1e-9]), band_grid)
        two = synthesize_cfr(PathSet([1.0, 0.3], [1e-9, 3e-9]), band_grid)
        assert ripple_variance(two) > ripple_variance(one) + 1e-3


class TestSlidingMedian:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=9, max_size=60), st.sampled_from([3, 5, 9, 11]))
    def test_matches_truncated_rolling_median(self, xs, w):
        x = np.array(xs)
        oracle = pd.Series(x).rolling(w, center=True, min_periods=1).median().to_numpy()
        np.testing.assert_allclose(sliding_median(x, w), oracle, rtol=1e-12, atol=1e-12)


class TestInvariances:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-40, 40), st.floats(0.01, 100), st.floats(-np.pi, np.pi))
    def test_calibration_invariance(self, seed, offset_db, scale, phase):
        g = FrequencyGrid(2e9, 3.5e9, 4e7)
        rng = np.random.default_rng(seed)
        mag = np.exp(0.3 * rng.standard_normal(len(g)))
        base = compute_features(spectrum_from_mag(g, mag))
        shifted = compute_features(spectrum_from_mag(g, mag * 10 ** (offset_db / 20)))
        scaled = compute_features(spectrum_from_mag(g, mag * scale))
        rotated = compute_features(ChannelSpectrum.from_response(g, mag * np.exp(1j * phase)))
        for other in (shifted, scaled, rotated):
            np.testing.assert_allclose(other.as_array()[[0, 2]], base.as_array()[[0, 2]], rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(other.as_array()[[1, 3]], base.as_array()[[1, 3]], rtol=1e-9, atol=1e-12)
        assert base.bai >= 0 and base.hl > 0 and base.ripple_var >= 0

    def test_trapezoid_exact_for_piecewise_linear(self):
        g = FrequencyGrid(2e9, 3.5e9, 50e6)
        f = g.points
        mag = np.where(f < 2.75e9, 1 + (f - 2e9) / 1e9, 1.75 - 0.5 * (f - 2.75e9) / 1e9)
        low = 0.75 * (1 + 1.75) / 2
        high = 0.75 * (1.75 + 1.375) / 2
        assert hl_ratio(spectrum_from_mag(g, mag)) == pytest.approx(high / low, rel=1e-13)


class TestErrors:
    def test_band_outside_grid(self):
        g = FrequencyGrid(2.5e9, 3.5e9, 4e7)
        with pytest.raises(BandRangeError):
            band_indices(spectrum_from_mag(g, np.ones(len(g))), 2.0e9, 3.5e9)

    @pytest.mark.parametrize("window", [2, 4, 1, 1001])
    def test_bad_window(self, band_grid, window):
        with pytest.raises(ParameterError):
            ripple_variance(spectrum_from_mag(band_grid, np.ones(len(band_grid))), BAND, window)

    def test_band_ordering(self):
        with pytest.raises(ValidationError):
            WorkingBand(2e9, 3e9, 3.5e9)


class TestSeries:
    grid = FrequencyGrid(2e9, 5e9, 4e7)

    def test_zero_growth_constant(self):
        sc = load_scenario(bundled_scenario_path())
        from tubersense.sim import simulate_air_reference

        air = simulate_air_reference(self.grid, 0.254, frontend=sc.frontend)
        recs = simulate_growth_series(default_medium(0.0), [(d, 0.0) for d in range(1, 8)], self.grid,
                                      frontend=sc.frontend)
        F = np.array([fv.as_array() for fv in feature_series(recs, air)])
        np.testing.assert_array_equal(F, np.repeat(F[:1], len(F), axis=0))

    def test_noise_free_ramp_directions(self):
        sc = replace(load_scenario(bundled_scenario_path()), noise_sd=0.0)
        air, pots = simulate_scenario(sc)
        for recs in pots.values():
            F = np.array([fv.as_array() for fv in feature_series(recs, air)])
            d = np.diff(F, axis=0)
            assert np.all(d[:, 0] > 0), "BAI must increase day over day"
            assert np.all(d[:, 1] < 0), "HL must decrease"
            assert np.all(d[:, 2] < 0), "Slope must decrease"
            assert np.all(d[:, 3] > 0), "RippleVar must increase"

    def test_bundled_count_and_order(self, growth_run):
        fvs = growth_run["features"]
        assert len(fvs) == 180
        assert all(isinstance(fv, FeatureVector) for fv in fvs)
        assert [fv.day for fv in fvs[:45]] == list(range(1, 46))

    def test_mixed_order_input(self, growth_run):
        recs = [r for rs in growth_run["pots"].values() for r in rs]
        rev = list(reversed(recs))
        out = feature_series(rev, growth_run["air"])
        assert [(f.pot_id, f.day) for f in out] == [(r.pot_id, r.day) for r in rev]
        by_key = {(f.pot_id, f.day): f for f in growth_run["features"]}
        for f in out:
            assert f == by_key[(f.pot_id, f.day)]
