"""Functionals of mean-zero fields, checked against closed forms and quadrature."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import i0

from kdvlab.errors import IllConditioned, NonZeroMean, TooShort, WeightOverflow
from kdvlab.field import GridField, TorusGrid, from_basis_coefficients
from kdvlab.functionals import (
    e3,
    h1,
    hamiltonian_mkdv,
    j_weight,
    k_continuity_bound,
    k_functional,
    l2_norm,
    lattice_q,
    lattice_q_gradient,
    log_j_weight,
    log_k_functional,
    miura,
    miura_jacobian_det,
    miura_jacobian_matrix,
)

TWO_PI = 2 * np.pi

# K(+-sin) = int_0^1 exp(+-(1 - cos 2 pi x)/pi) dx = exp(+-1/pi) I0(1/pi)
K_SIN = 1.4098475228179335
K_MINUS_SIN = 0.7459190373642084
J_SIN = 0.4754016809593729


def sin1(n):
    return GridField.from_function(n, lambda x: np.sin(TWO_PI * x))


def smooth_field(n, seed, k_max=5):
    rng = np.random.default_rng(seed)
    c = np.zeros(2 * (n // 2 - 1))
    c[: 2 * k_max] = rng.standard_normal(2 * k_max) / np.repeat(np.arange(1, k_max + 1), 2)
    f = from_basis_coefficients(n, c)
    return f.with_values(f.values / l2_norm(f))


class TestOracleConstants:
    """The frozen constants agree with two independent oracles."""

    def test_k_sin_closed_form(self):
        assert np.exp(1 / np.pi) * i0(1 / np.pi) == pytest.approx(K_SIN, rel=1e-14)
        assert np.exp(-1 / np.pi) * i0(1 / np.pi) == pytest.approx(K_MINUS_SIN, rel=1e-14)

    def test_k_sin_quadrature(self):
        val, _ = quad(lambda x: np.exp((1 - np.cos(TWO_PI * x)) / np.pi), 0, 1, epsabs=1e-14)
        assert val == pytest.approx(K_SIN, rel=1e-12)


class TestK:
    def test_zero_field(self):
        assert k_functional(GridField.zeros(16)) == 1.0

    def test_sin(self):
        assert k_functional(sin1(4096)) == pytest.approx(K_SIN, rel=1e-12)
        assert k_functional(sin1(64), -1) == pytest.approx(K_MINUS_SIN, rel=1e-12)

    def test_log_matches(self):
        phi = smooth_field(64, 1)
        assert log_k_functional(phi) == pytest.approx(np.log(k_functional(phi)), rel=1e-12)

    def test_log_is_stable_for_large_fields(self):
        phi = smooth_field(64, 2)
        big = phi.with_values(500 * phi.values)
        assert np.isfinite(log_k_functional(big))

    def test_rejects_nonzero_mean(self):
        with pytest.raises(NonZeroMean):
            k_functional(GridField(TorusGrid(8), np.ones(8)))

    def test_rejects_bad_sign(self):
        with pytest.raises(ValueError):
            k_functional(sin1(8), 2)

    def test_batched(self):
        phi = GridField(TorusGrid(64), np.stack([sin1(64).values, np.zeros(64)]))
        np.testing.assert_allclose(k_functional(phi), [K_SIN, 1.0], rtol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 0.5))
    def test_continuity_bound(self, seed, scale):
        phi = smooth_field(64, seed)
        psi = phi.with_values(phi.values + scale * smooth_field(64, seed + 1).values)
        assert abs(k_functional(phi) - k_functional(psi)) <= k_continuity_bound(phi, psi) * (1 + 1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_jensen_lower_bound(self, seed):
        # K(phi) K(-phi) >= 1 by Cauchy-Schwarz
        phi = smooth_field(64, seed)
        assert k_functional(phi) * k_functional(phi, -1) >= 1.0 - 1e-12


class TestJ:
    def test_zero_field(self):
        assert log_j_weight(GridField.zeros(16)) == pytest.approx(-0.5 * np.log(TWO_PI), abs=1e-15)

    def test_sin(self):
        expected = (TWO_PI) ** -0.5 * K_SIN * K_MINUS_SIN * np.exp(1 / 8)
        assert expected == pytest.approx(J_SIN, rel=1e-14)
        assert j_weight(sin1(64)) == pytest.approx(J_SIN, rel=1e-12)

    def test_overflow(self):
        phi = sin1(64)
        huge = phi.with_values(40 * phi.values)
        assert np.isfinite(log_j_weight(huge))
        with pytest.raises(WeightOverflow):
            j_weight(huge)


class TestMiura:
    def test_zero(self):
        assert np.all(miura(GridField.zeros(16)).values == 0)

    def test_sin(self):
        out = miura(sin1(32))
        x = out.grid.x
        exact = TWO_PI * np.cos(TWO_PI * x) - 0.5 * np.cos(2 * TWO_PI * x)
        assert np.max(np.abs(out.values - exact)) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_image_is_mean_zero(self, seed):
        assert abs(miura(smooth_field(64, seed)).values.mean()) < 1e-12

    def test_rejects_nonzero_mean(self):
        with pytest.raises(NonZeroMean):
            miura(GridField(TorusGrid(8), np.ones(8)))


class TestConservedQuantities:
    def test_zero(self):
        z = GridField.zeros(16)
        assert hamiltonian_mkdv(z) == 0
        assert h1(z) == 0
        assert e3(z) == 0

    def test_hamiltonian_sin(self):
        assert hamiltonian_mkdv(sin1(32)) == pytest.approx(3 / 16 + np.pi**2, rel=1e-13)
        val, _ = quad(lambda x: 0.5 * (np.sin(TWO_PI * x) ** 4 + (TWO_PI * np.cos(TWO_PI * x)) ** 2), 0, 1)
        assert hamiltonian_mkdv(sin1(32)) == pytest.approx(val, rel=1e-12)

    def test_h1_e3_sin(self):
        assert h1(sin1(32)) == pytest.approx(0.5, rel=1e-14)
        assert e3(sin1(32)) == pytest.approx(np.pi**2, rel=1e-13)


class TestLatticeQ:
    def test_values(self):
        assert lattice_q(np.zeros(4)) == 0
        assert lattice_q([1, -1, 1, -1]) == -4
        assert lattice_q([1, 1, 1, 1]) == 12

    def test_too_short(self):
        with pytest.raises(TooShort):
            lattice_q([1.0, 2.0])

    def test_indefinite_along_witness(self):
        w = np.array([1.0, -1.0, 1.0, -1.0])
        for c in (1.0, 3.0, 10.0):
            assert lattice_q(c * w) == pytest.approx(-4 * c**2)

    def test_gradient_by_finite_differences(self):
        u = np.random.default_rng(0).standard_normal(12)
        eps = 1e-6
        fd = np.array([(lattice_q(u + eps * e) - lattice_q(u - eps * e)) / (2 * eps) for e in np.eye(12)])
        np.testing.assert_allclose(lattice_q_gradient(u), fd, atol=1e-6)


def jacobian_oracle(phi: GridField) -> np.ndarray:
    """Columns of ``psi -> psi + 2 P(phi D^{-1} psi)`` built by pointwise products."""
    n = phi.n
    x = phi.grid.x
    k = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(int)[1:]
    cols = []
    for kj in k:
        mode = np.exp(2j * np.pi * kj * x) / (2j * np.pi * kj)
        c = np.fft.fft(2 * phi.values * mode) / n
        unit = np.zeros(n - 1, dtype=complex)
        unit[list(k).index(kj)] = 1.0
        cols.append(unit + c[k % n])
    return np.array(cols).T


class TestMiuraJacobian:
    def test_matrix_matches_pointwise_oracle(self):
        phi = smooth_field(16, 3)
        np.testing.assert_allclose(miura_jacobian_matrix(phi), jacobian_oracle(phi), atol=1e-12)

    def test_zero_field_is_identity(self):
        assert miura_jacobian_det(GridField.zeros(16)) == pytest.approx(1.0)

    def test_determinant_against_dense_oracle(self):
        phi = smooth_field(32, 4)
        assert miura_jacobian_det(phi) == pytest.approx(np.linalg.det(jacobian_oracle(phi)).real, rel=1e-10)

    def test_sign_symmetry(self):
        phi = smooth_field(64, 5)
        neg = phi.with_values(-phi.values)
        assert miura_jacobian_det(neg) == pytest.approx(miura_jacobian_det(phi), rel=1e-10)

    def test_ratio_to_k_product_is_constant(self):
        rng_seeds = range(20)
        ratios = []
        for s in rng_seeds:
            phi = smooth_field(64, 100 + s)
            ratios.append(miura_jacobian_det(phi) / (k_functional(phi) * k_functional(phi, -1)))
        ratios = np.array(ratios)
        assert (ratios.max() - ratios.min()) / abs(ratios.mean()) < 1e-3

    def test_ill_conditioned(self):
        # exactly mean-zero on the grid, so only the conditioning check can trip
        phi = GridField(TorusGrid(16), 1e10 * np.tile([0.0, 1.0, 0.0, -1.0], 4))
        with pytest.raises(IllConditioned):
            miura_jacobian_det(phi)
