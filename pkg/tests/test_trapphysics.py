import warnings

import numpy as np
import pytest
from scipy import constants

from iontrap.errors import IonLostError
from iontrap.trapphysics import (
    BE9_MASS,
    TrapParams,
    Trajectory,
    compare_to_secular_approx,
    fit_secular_motion,
    integrate_trajectory,
    pseudopotential,
    q_parameter,
    secular_frequency,
)

OMEGA_T = 2 * np.pi * 100e6


def trap(q):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TrapParams.from_q(q, OMEGA_T)


def run(q, periods=10):
    p = trap(q)
    w = secular_frequency(p)
    return p, integrate_trajectory(p, 1e-6, 0.5e-6, (0.0, 0.0), periods * 2 * np.pi / w)


class TestParams:
    def test_positive(self):
        with pytest.raises(ValueError):
            TrapParams(-1.0, OMEGA_T, 200e-6)

    def test_q_limits(self):
        with pytest.raises(ValueError):
            TrapParams.from_q(0.5, OMEGA_T)
        with pytest.warns(UserWarning):
            TrapParams.from_q(0.3, OMEGA_T)

    def test_defaults(self):
        assert BE9_MASS == pytest.approx(9.012182 * 1.66053906660e-27, rel=1e-9)


class TestFormulas:
    def test_q_definition(self):
        p = TrapParams(50.0, OMEGA_T, 250e-6)
        assert q_parameter(p) == pytest.approx(2 * constants.e * 50 / (p.m * 250e-6**2 * OMEGA_T**2))

    def test_q_linear_in_voltage(self):
        p1 = TrapParams(40.0, OMEGA_T, 200e-6)
        p2 = TrapParams(80.0, OMEGA_T, 200e-6)
        assert q_parameter(p2) == pytest.approx(2 * q_parameter(p1))

    def test_secular_frequency_value(self):
        p = trap(0.2)
        assert secular_frequency(p) / (2 * np.pi) == pytest.approx(0.2 * 100e6 / (2 * np.sqrt(2)), rel=1e-12)
        assert secular_frequency(p) / (2 * np.pi) == pytest.approx(7.07e6, rel=1e-3)

    def test_consistency(self):
        for V in (10.0, 40.0, 90.0):
            p = TrapParams(V, OMEGA_T, 200e-6)
            assert q_parameter(p) == pytest.approx(2 * np.sqrt(2) * secular_frequency(p) / OMEGA_T, rel=1e-14)

    def test_frequency_scaling(self):
        p1 = TrapParams(100.0, OMEGA_T, 200e-6)
        p2 = TrapParams(100.0, 2 * OMEGA_T, 200e-6)
        assert secular_frequency(p2) == pytest.approx(secular_frequency(p1) / 2)

    def test_pseudopotential(self):
        p = trap(0.2)
        assert pseudopotential(0, 0, p) == 0
        assert pseudopotential(1e-6, 2e-6, p) == pytest.approx(pseudopotential(-1e-6, 2e-6, p))
        assert pseudopotential(1e-6, 2e-6, p) == pytest.approx(pseudopotential(2e-6, 1e-6, p))
        # hand evaluation: omega = 2 pi * 7.0711 MHz, m = 9.012182 u, x = 1 um
        w = 2 * np.pi * 0.2 * 100e6 / (2 * np.sqrt(2))
        expected = 0.5 * 9.012182 * 1.66053906660e-27 * w**2 * 1e-12
        assert pseudopotential(1e-6, 0, p) == pytest.approx(expected, rel=1e-9)

    def test_curvature(self):
        p = trap(0.1)
        h = 1e-7
        d2 = (pseudopotential(h, 0, p) - 2 * pseudopotential(0, 0, p) + pseudopotential(-h, 0, p)) / h**2
        assert d2 == pytest.approx(p.m * secular_frequency(p) ** 2, rel=1e-6)


class TestIntegration:
    def test_equilibrium(self):
        p = trap(0.1)
        tr = integrate_trajectory(p, 0, 0, (0, 0), 1e-7)
        assert np.all(tr.x == 0) and np.all(tr.y == 0)

    def test_dt_limit(self):
        p = trap(0.1)
        with pytest.raises(ValueError):
            integrate_trajectory(p, 1e-6, 0, (0, 0), 1e-7, dt=2 * np.pi / (10 * OMEGA_T))

    def test_ion_lost(self):
        p = trap(0.1)
        with pytest.raises(IonLostError):
            integrate_trajectory(p, 1e-6, 0, (1e5, 0), 1e-6)

    def test_micromotion_and_frequency(self):
        p, tr = run(0.1)
        fit = fit_secular_motion(tr, p)
        assert fit.micromotion_ratio == pytest.approx(0.05, rel=0.10)
        assert fit.omega == pytest.approx(secular_frequency(p), rel=0.02)
        yfit = fit_secular_motion(tr, p, axis="y")
        assert yfit.omega == pytest.approx(secular_frequency(p), rel=0.02)
        # micromotion in y is in antiphase with x; the fitted ratio is negative
        assert yfit.micromotion_ratio == pytest.approx(-0.05, rel=0.10)

    def test_deviation_thresholds_and_monotone(self):
        devs = []
        for q in (0.05, 0.1, 0.2):
            p, tr = run(q)
            devs.append(compare_to_secular_approx(tr, p))
        assert devs[0] < 0.01
        assert devs[2] < 0.05
        assert devs[0] < devs[1] < devs[2]

    def test_too_short(self):
        p, tr = run(0.1, periods=2)
        with pytest.raises(ValueError):
            compare_to_secular_approx(tr, p)

    def test_secular_energy_bounded(self):
        p, tr = run(0.05, periods=10)
        w = secular_frequency(p)
        # slow envelope energy: average over each rf period removes micromotion
        steps = 50
        x = tr.x[: (len(tr.x) // steps) * steps].reshape(-1, steps).mean(axis=1)
        v = tr.vx[: (len(tr.vx) // steps) * steps].reshape(-1, steps).mean(axis=1)
        e = 0.5 * v**2 + 0.5 * w**2 * x**2
        n = len(e) // 10
        first, last = e[: 4 * n].mean(), e[-4 * n:].mean()
        assert last == pytest.approx(first, rel=0.05)


class TestTrajectory:
    def test_csv(self, tmp_path):
        tr = Trajectory([0.0, 1e-9], [1e-6, 1.1e-6], [0, 0], [0, 1.0], [0, 0])
        text = tr.to_csv(tmp_path / "t.csv")
        lines = text.splitlines()
        assert lines[0] == "t,x,y,vx,vy"
        assert lines[2] == "1e-09,1.1e-06,0,1,0"
        assert (tmp_path / "t.csv").read_text() == text
        assert tr.samples[1] == (1e-9, 1.1e-6, 0.0, 1.0, 0.0)

    def test_increasing(self):
        with pytest.raises(ValueError):
            Trajectory([0.0, 0.0], [0, 0], [0, 0], [0, 0], [0, 0])

    def test_finite(self):
        with pytest.raises(ValueError):
            Trajectory([0.0, 1.0], [0, np.nan], [0, 0], [0, 0], [0, 0])
