import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iontrap.spectroscopy import (
    _estimates,
    RamseyConfig,
    RamseyMode,
    closed_form,
    fringe_slope,
    max_slope_detuning,
    monte_carlo_clock,
    projection_noise_bound,
    ramsey_expectation,
    ramsey_pair,
    simulate_entangled,
    simulate_uncorrelated,
)

ENT, UNC = RamseyMode.ENTANGLED, RamseyMode.UNCORRELATED
T_R = 1e-3


def cfg(N, delta, mode, **kw):
    return RamseyConfig(N, 1e6 + delta, 1e6, T_R, mode, **kw)


class TestFringes:
    @given(st.integers(1, 6), st.floats(-5e3, 5e3), st.sampled_from([ENT, UNC]))
    def test_simulation_matches_closed_form(self, N, delta, mode):
        closed, sim = ramsey_pair(cfg(N, delta, mode))
        assert sim == pytest.approx(closed, abs=1e-9)

    def test_on_resonance(self):
        assert simulate_entangled(cfg(3, 0, ENT)) == pytest.approx(-1, abs=1e-12)
        assert simulate_entangled(cfg(2, 0, ENT)) == pytest.approx(1, abs=1e-12)
        assert simulate_uncorrelated(cfg(4, 0, UNC)) == pytest.approx(1, abs=1e-12)

    @given(st.floats(0, 2 * np.pi))
    def test_ghz_phase_shifts_fringe(self, phi):
        assert simulate_entangled(cfg(3, 0, ENT), ghz_phase=phi) == pytest.approx(-np.cos(phi), abs=1e-9)

    @given(st.integers(2, 6), st.floats(-3e3, 3e3))
    def test_entangled_period_shrinks_by_n(self, N, delta):
        a = closed_form(cfg(N, delta, ENT))
        b = closed_form(cfg(N, delta + 2 * np.pi / (N * T_R), ENT))
        assert a == pytest.approx(b, abs=1e-9)
        assert ramsey_expectation(cfg(N, delta, ENT)) == pytest.approx(a)

    def test_slope_ratio(self):
        for N in range(1, 7):
            e = abs(fringe_slope(RamseyConfig.at_max_slope(N, T_R, ENT)))
            u = abs(fringe_slope(RamseyConfig.at_max_slope(N, T_R, UNC)))
            assert e / u == pytest.approx(N)
        assert max_slope_detuning(4, T_R, ENT) == pytest.approx(np.pi / (8 * T_R))

    def test_large_n(self):
        c = cfg(8, 100.0, ENT)
        closed, sim = ramsey_pair(c)
        assert sim is None
        assert ramsey_expectation(c, simulate=False) == pytest.approx(np.cos(8 * 100 * T_R))
        with pytest.raises(ValueError):
            ramsey_expectation(c)
        with pytest.raises(ValueError):
            simulate_entangled(c)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RamseyConfig(0, 1, 1, T_R)
        with pytest.raises(ValueError):
            RamseyConfig(1, 1, 1, -1.0)
        assert RamseyConfig(1, 1, 1, T_R, "entangled").mode is ENT


class TestBound:
    @given(st.integers(1, 20), st.floats(1e-4, 1e-1))
    def test_ratio(self, N, tau):
        u = projection_noise_bound(N, 1e-4, tau, UNC)
        e = projection_noise_bound(N, 1e-4, tau, ENT)
        assert u / e == pytest.approx(np.sqrt(N))

    def test_scaling(self):
        assert projection_noise_bound(1, T_R, 1, UNC) == projection_noise_bound(1, T_R, 1, ENT)
        a = projection_noise_bound(3, T_R, 1.0, UNC)
        assert projection_noise_bound(3, T_R, 4.0, UNC) == pytest.approx(a / 2)
        with pytest.raises(ValueError):
            projection_noise_bound(3, T_R, T_R / 2, UNC)


class TestMonteCarlo:
    def test_uncorrelated_near_bound(self):
        r = monte_carlo_clock(RamseyConfig.at_max_slope(4, T_R, UNC, shots=10_000, seed=1))
        assert r.delta_omega == pytest.approx(r.bound, rel=0.1)
        expected = 1 / (T_R * np.sqrt(4 * 10_000))
        assert r.bound == pytest.approx(expected)

    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_entangled_gain(self, N):
        u = monte_carlo_clock(RamseyConfig.at_max_slope(N, T_R, UNC, seed=5))
        e = monte_carlo_clock(RamseyConfig.at_max_slope(N, T_R, ENT, seed=6))
        assert e.delta_omega / u.delta_omega == pytest.approx(1 / np.sqrt(N), rel=0.1)

    def test_deterministic_and_thread_invariant(self):
        c = RamseyConfig.at_max_slope(3, T_R, ENT, seed=42, runs=500)
        a, b, t = monte_carlo_clock(c), monte_carlo_clock(c), monte_carlo_clock(c, threads=4)
        assert a == b == t
        assert monte_carlo_clock(RamseyConfig.at_max_slope(3, T_R, ENT, seed=43, runs=500)) != a

    def test_zero_slope_rejected(self):
        with pytest.raises(ValueError, match="slope"):
            monte_carlo_clock(cfg(2, 0.0, ENT))

    def test_mean_over_seeds_matches_bound(self):
        vals = np.array([monte_carlo_clock(RamseyConfig.at_max_slope(2, T_R, ENT, seed=seed, runs=200,
                                                                     shots=2000)).delta_omega
                         for seed in range(100)])
        bound = projection_noise_bound(2, T_R, 2000 * T_R, ENT)
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean() - bound) < 2 * se

    def test_estimator_unbiased(self):
        c = RamseyConfig.at_max_slope(3, T_R, ENT, shots=1000)
        centre = closed_form(c)
        est = _estimates(c, np.random.default_rng(0), 20_000, (1 + centre) / 2, fringe_slope(c), centre)
        bound = projection_noise_bound(3, T_R, 1000 * T_R, ENT)
        assert abs(est.mean() - c.omega) < 5 * bound / np.sqrt(est.size)

    def test_stderr_and_dict(self):
        r = monte_carlo_clock(RamseyConfig.at_max_slope(2, T_R, UNC, runs=2000))
        assert r.stderr == pytest.approx(r.delta_omega / np.sqrt(2 * 1999))
        d = r.to_dict()
        assert d["mode"] == "uncorrelated" and d["N"] == 2
