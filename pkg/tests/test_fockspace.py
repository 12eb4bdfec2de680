import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from iontrap.errors import TruncationError, TruncationWarning
from iontrap.fockspace import (
    FockSpace,
    HybridState,
    InternalLevel,
    MotionalDensityMatrix,
    check_truncation,
    coherent_amplitudes,
    coherent_state,
    displacement_matrix,
    fidelity,
    motional_populations,
)

DOWN, UP, AUX = InternalLevel.DOWN, InternalLevel.UP, InternalLevel.AUX


def coherent_oracle(alpha, dim):
    n = np.arange(dim)
    fact = np.array([math.factorial(k) for k in n], dtype=float)
    return np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(fact)


class TestFockSpace:
    def test_rejects_tiny_space(self):
        with pytest.raises(ValueError):
            FockSpace(0)

    def test_operator_shapes(self):
        s = FockSpace(7)
        for op in (s.lowering(), s.raising(), s.number()):
            assert op.shape == (8, 8)

    @given(st.integers(1, 30), st.data())
    def test_lowering_on_number_state(self, n_max, data):
        s = FockSpace(n_max)
        n = data.draw(st.integers(0, n_max))
        out = s.lowering() @ s.basis(n)
        expected = np.zeros(s.dim)
        if n > 0:
            expected[n - 1] = np.sqrt(n)
        assert np.array_equal(out, expected)

    def test_sigma_z(self):
        assert UP.sigma_z == 1 and DOWN.sigma_z == -1
        with pytest.raises(ValueError):
            AUX.sigma_z


class TestCoherent:
    def test_vacuum(self):
        s = FockSpace(10)
        assert np.array_equal(coherent_amplitudes(0, s), s.basis(0))

    def test_poisson_populations(self):
        s = FockSpace(30)
        alpha = np.sqrt(3.1)
        p = motional_populations(coherent_state(alpha, s))
        assert np.allclose(p, poisson.pmf(np.arange(31), 3.1), atol=1e-9)
        assert p[0] == pytest.approx(0.0450, abs=5e-5)
        assert p[0] == pytest.approx(np.exp(-3.1), rel=1e-9)
        assert np.arange(31) @ p == pytest.approx(3.1, abs=1e-6)

    def test_matches_closed_form(self):
        s = FockSpace(25)
        alpha = 1.2 - 0.7j
        expected = coherent_oracle(alpha, s.dim)
        assert np.allclose(coherent_amplitudes(alpha, s), expected / np.linalg.norm(expected), atol=1e-12)

    def test_phase_convention_vacuum_real_positive(self):
        a = coherent_amplitudes(0.9j, FockSpace(20))
        assert a[0].imag == 0 and a[0].real > 0

    def test_budget_violation(self):
        with pytest.raises(TruncationError):
            coherent_amplitudes(2.0, FockSpace(10))

    def test_tail_violation(self):
        # within |alpha|^2 <= n_max/3 but the Poisson tail beyond n_max = 9 is too big
        with pytest.raises(TruncationError):
            coherent_amplitudes(np.sqrt(3.0), FockSpace(9))

    @given(st.floats(0, 1.8), st.floats(0, 2 * np.pi))
    def test_normalized(self, r, phi):
        a = coherent_amplitudes(r * np.exp(1j * phi), FockSpace(30))
        assert abs(np.linalg.norm(a) - 1) < 1e-10


class TestDisplacement:
    def test_zero_is_identity(self):
        assert np.allclose(displacement_matrix(0, FockSpace(12)), np.eye(13), atol=1e-14)

    def test_column_zero_at_one(self):
        s = FockSpace(40)
        col = displacement_matrix(1.0, s)[:, 0]
        assert np.allclose(col, coherent_oracle(1.0, s.dim), atol=1e-8)

    @given(st.floats(0, 2.0), st.floats(0, 2 * np.pi))
    def test_unitary_and_inverse(self, r, phi):
        s = FockSpace(20)
        alpha = r * np.exp(1j * phi)
        D = displacement_matrix(alpha, s)
        assert np.allclose(D @ D.conj().T, np.eye(s.dim), atol=1e-8)
        assert np.allclose(D @ displacement_matrix(-alpha, s), np.eye(s.dim), atol=1e-8)

    @given(st.floats(0, 1.0), st.floats(0, 2 * np.pi), st.integers(40, 60))
    def test_vacuum_column_matches_coherent(self, frac, phi, n_max):
        # the truncated exponential is accurate to 1e-8 for |alpha|^2 <= n_max/6
        alpha = np.sqrt(frac * n_max / 6) * np.exp(1j * phi)
        s = FockSpace(n_max)
        assert np.allclose(displacement_matrix(alpha, s)[:, 0], coherent_amplitudes(alpha, s), atol=1e-8)

    def test_budget(self):
        with pytest.raises(TruncationError):
            displacement_matrix(3.0, FockSpace(20))


class TestPopulations:
    def test_number_state(self):
        s = FockSpace(5)
        assert np.array_equal(motional_populations(HybridState.basis(UP, 1, s)), s.basis(1))

    def test_fock_superposition(self):
        s = FockSpace(6)
        v = np.zeros(s.dim, complex)
        v[0], v[2] = 1, -1j
        p = motional_populations(MotionalDensityMatrix.pure(v))
        assert p[0] == pytest.approx(0.5) and p[2] == pytest.approx(0.5)

    def test_sums_over_levels(self):
        s = FockSpace(4)
        st_ = HybridState.superposition([(1, DOWN, 0), (1, UP, 0), (1, AUX, 3)], s)
        assert np.allclose(motional_populations(st_), [2 / 3, 0, 0, 1 / 3, 0])

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            motional_populations(np.array([1.0, 1.0]))


class TestValidation:
    def test_hybrid_norm(self):
        with pytest.raises(ValueError):
            HybridState(np.ones((3, 4)))

    def test_hybrid_shape(self):
        with pytest.raises(ValueError):
            HybridState(np.ones((2, 4)) / np.sqrt(8))

    def test_density_hermitian(self):
        with pytest.raises(ValueError):
            MotionalDensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))

    def test_density_trace(self):
        with pytest.raises(ValueError):
            MotionalDensityMatrix(np.eye(2))

    def test_density_negative_diagonal(self):
        m = np.diag([1.1, -0.1])
        with pytest.raises(ValueError):
            MotionalDensityMatrix(m)
        assert MotionalDensityMatrix(m, strict=False).populations()[1] == pytest.approx(-0.1)

    def test_truncation_warning(self):
        p = np.zeros(20)
        p[0], p[-1] = 1 - 1e-4, 1e-4
        with pytest.warns(TruncationWarning):
            check_truncation(p)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            check_truncation(np.eye(20)[0])


class TestFidelity:
    def test_self(self):
        rho = MotionalDensityMatrix.from_populations([0.5, 0.3, 0.2])
        assert fidelity(rho, rho) == pytest.approx(1, abs=1e-9)

    def test_orthogonal(self):
        s = FockSpace(4)
        assert fidelity(s.basis(0), s.basis(1)) == 0

    def test_vacuum_vs_coherent(self):
        s = FockSpace(30)
        assert fidelity(s.basis(0), coherent_amplitudes(1.0, s)) == pytest.approx(np.exp(-1), abs=1e-9)

    @given(st.floats(0, 1.5), st.floats(0, 1.5))
    def test_symmetric_pure(self, a, b):
        s = FockSpace(30)
        x, y = coherent_amplitudes(a, s), coherent_amplitudes(1j * b, s)
        assert fidelity(x, y) == pytest.approx(fidelity(y, x), abs=1e-12)

    def test_mixed_uhlmann_diagonal(self):
        a = MotionalDensityMatrix.from_populations([0.7, 0.3])
        b = MotionalDensityMatrix.from_populations([0.4, 0.6])
        expected = (np.sqrt(0.7 * 0.4) + np.sqrt(0.3 * 0.6)) ** 2
        assert fidelity(a, b) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fidelity(np.eye(2)[0], np.eye(3)[0])
