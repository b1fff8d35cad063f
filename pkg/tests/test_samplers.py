"""Samplers for white noise, the circular bridge and the weighted Gibbs measure."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvlab.errors import BadModeCount, DegenerateWeights
from kdvlab.field import GridField, TorusGrid, basis_coefficients
from kdvlab.functionals import log_j_weight
from kdvlab.samplers import (
    RngStream,
    WeightedEnsemble,
    bridge_ensemble,
    bridge_mode_std,
    effective_sample_size,
    lattice_gaussian_ensemble,
    p04_log_density,
    sample_circular_bridge,
    sample_p04_importance,
    sample_p04_pcn,
    sample_white_noise,
    white_noise_ensemble,
)
from kdvlab.stats import batch_means_se, gelman_rubin, weighted_mean_se


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(7, 3).generator().standard_normal(5)
        b = RngStream(7, 3).generator().standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngStream(7, 0).generator().standard_normal(5)
        b = RngStream(7, 1).generator().standard_normal(5)
        assert not np.allclose(a, b)

    def test_ensemble_member_uses_its_stream(self):
        e = white_noise_ensemble(5, 32, 4, master_seed=11)
        direct = sample_white_noise(32, 4, True, RngStream(11, 3))
        np.testing.assert_array_equal(e.values[3], direct.values)


class TestWhiteNoise:
    @pytest.mark.parametrize("modes", [0, 11])
    def test_bad_mode_count(self, modes):
        with pytest.raises(BadModeCount):
            sample_white_noise(32, modes, True, RngStream(0))

    def test_band_limit_and_mean(self):
        f = sample_white_noise(32, 4, True, RngStream(1))
        c = np.fft.rfft(f.values)
        np.testing.assert_allclose(c[5:], 0, atol=1e-12)
        assert abs(c[0]) < 1e-12

    def test_mean_mode_present_when_requested(self):
        e = white_noise_ensemble(2000, 16, 2, master_seed=5, mean_zero=False)
        means = e.values.mean(axis=1)
        assert means.var() == pytest.approx(1.0, abs=0.15)

    def test_coefficient_moments(self):
        # 2*10^4 draws: standard error of the variance is 0.01, allow 4 of them
        e = white_noise_ensemble(20_000, 32, 8, master_seed=2)
        c = basis_coefficients(e.members, 8)
        assert np.all(np.abs(c.mean(axis=0)) < 4 / np.sqrt(20_000))
        assert np.all(np.abs(c.var(axis=0) - 1.0) < 0.04)


class TestBridge:
    def test_mode_std(self):
        std = bridge_mode_std(12)
        np.testing.assert_allclose(std, np.repeat(1 / (2 * np.pi * np.arange(1, 5)), 2))

    def test_mean_zero_and_band_limited(self):
        f = sample_circular_bridge(48, RngStream(3))
        c = np.fft.rfft(f.values)
        assert abs(c[0]) < 1e-12
        np.testing.assert_allclose(c[17:], 0, atol=1e-12)

    def test_covariance_is_bernoulli_kernel(self):
        m, n = 20_000, 256
        e = bridge_ensemble(m, n, master_seed=4)
        probe = np.arange(0, n, n // 16)
        emp = e.values[:, :1].T @ e.values[:, probe] / m
        theta = probe / n
        exact = 0.5 * (theta**2 - theta + 1 / 6)
        # truncation error is 1/(2 pi^2 * 85) ~ 6e-4; Monte Carlo se ~ 1e-3
        assert np.max(np.abs(emp.ravel() - exact)) < 0.005

    def test_pointwise_variance_series(self):
        k = np.arange(1, 200_000)
        assert np.sum(2 / (2 * np.pi * k) ** 2) == pytest.approx(1 / 12, rel=1e-5)


class TestWeightedEnsemble:
    def test_uniform(self):
        e = WeightedEnsemble.uniform(GridField(TorusGrid(8), np.zeros((4, 8))))
        assert e.is_uniform and len(e) == 4 and e.ess() == pytest.approx(4)
        np.testing.assert_allclose(e.normalized_weights(), 0.25)

    def test_validation(self):
        with pytest.raises(ValueError):
            WeightedEnsemble(GridField(TorusGrid(8), np.zeros((4, 8))), np.zeros(3))
        with pytest.raises(ValueError):
            WeightedEnsemble(GridField(TorusGrid(8), np.zeros((2, 8))), [0.0, np.inf])

    @settings(max_examples=40, deadline=None)
    @given(lw=st.lists(st.floats(-50, 50), min_size=1, max_size=40))
    def test_ess_bounds(self, lw):
        ess = effective_sample_size(lw)
        assert 1.0 - 1e-9 <= ess <= len(lw) + 1e-9

    @settings(max_examples=20, deadline=None)
    @given(shift=st.floats(-500, 500), seed=st.integers(0, 1000))
    def test_ess_shift_invariant(self, shift, seed):
        lw = np.random.default_rng(seed).standard_normal(30)
        assert effective_sample_size(lw + shift) == pytest.approx(effective_sample_size(lw), rel=1e-9)

    def test_map_keeps_weights(self):
        e = WeightedEnsemble(GridField(TorusGrid(8), np.ones((3, 8))), [0.0, 1.0, 2.0], "x", 9)
        out = e.map(lambda f: f.with_values(2 * f.values), "y")
        np.testing.assert_array_equal(out.log_weights, e.log_weights)
        assert out.measure == "y" and out.master_seed == 9
        np.testing.assert_array_equal(out.values, 2.0)

    def test_lattice_ensemble(self):
        e = lattice_gaussian_ensemble(3000, 16, 1, sigma=2.0)
        assert e.values.var() == pytest.approx(4.0, rel=0.05)


class TestGibbsSamplers:
    def test_zero_field_weight(self):
        assert p04_log_density(GridField.zeros(64)) == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_importance_weights_finite(self):
        e = sample_p04_importance(10_000, 64, 0)
        assert np.all(np.isfinite(e.log_weights))
        assert e.info["ess"] == pytest.approx(e.ess())
        np.testing.assert_allclose(e.log_weights, p04_log_density(e.members))

    def test_importance_requires_enough_proposals(self):
        with pytest.raises(ValueError):
            sample_p04_importance(50, 64, 0)

    def test_degenerate_weights(self, monkeypatch):
        import kdvlab.samplers as samplers

        def spiky(phi):
            out = np.full(phi.values.shape[0], -1e3)
            out[0] = 0.0
            return out

        monkeypatch.setattr(samplers, "p04_log_density", spiky)
        with pytest.raises(DegenerateWeights):
            sample_p04_importance(200, 32, 0)

    def test_pcn_reproducible_and_shaped(self):
        a = sample_p04_pcn(40, 32, burn_in=10, beta=0.5, rng=3, chains=4, thin=2)
        b = sample_p04_pcn(40, 32, burn_in=10, beta=0.5, rng=3, chains=4, thin=2)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.values.shape == (40, 32) and a.is_uniform
        assert a.info["h_trace"].shape == (10 + 10 * 2, 4)
        assert 0 < a.info["acceptance_rate"] <= 1

    def test_pcn_rejects_bad_beta(self):
        with pytest.raises(ValueError):
            sample_p04_pcn(10, 32, 0, 0.0, 0)

    def test_samplers_agree_on_l2(self):
        imp = sample_p04_importance(20_000, 64, 1)
        l2 = np.mean(imp.values**2, axis=1)
        m_imp, se_imp = weighted_mean_se(l2, imp.log_weights)
        pcn = sample_p04_pcn(2000, 64, burn_in=500, beta=0.25, rng=2, chains=4, thin=10)
        l2p = np.mean(pcn.values**2, axis=1)
        # chain-major layout: batch means within chains
        se_pcn = np.sqrt(np.mean([batch_means_se(c, 10) ** 2 for c in l2p.reshape(4, -1)]) / 4)
        assert abs(m_imp - l2p.mean()) < 3 * np.hypot(se_imp, se_pcn)
        assert gelman_rubin(pcn.info["h_trace"][500:].T) < 1.1

    def test_log_j_is_finite_for_bridge_paths(self):
        e = bridge_ensemble(500, 64, 7)
        assert np.all(np.isfinite(log_j_weight(e.members)))
