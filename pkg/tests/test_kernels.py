"""Invariance and calibration of the generic rejuvenation kernels."""

import math

import numpy as np
import pytest

from smccv.kernels import (
    KernelConfig,
    KernelStats,
    _kinetic,
    _leapfrog,
    hmc_step,
    rwm_step,
    tune_step_size,
)


def std_normal_lp(draws):
    return -0.5 * np.sum(draws**2, axis=1)


def std_normal_grad(draws):
    return -draws


class TestKernelConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            KernelConfig(kind="nuts")
        with pytest.raises(ValueError):
            KernelConfig(step_size=0.0)
        with pytest.raises(ValueError):
            KernelConfig(iterations=-1)

    def test_identity_iterations_allowed(self):
        assert KernelConfig(iterations=0).iterations == 0


class TestRwm:
    def test_long_chain_standard_normal_moments(self):
        # Monte Carlo oracle: 1e5 chained steps from the origin
        rng = np.random.default_rng(0)
        draws = np.zeros((1, 1))
        collected = np.empty(100_000)
        scales = np.array([2.4])
        for i in range(100_000):
            draws = rwm_step(draws, std_normal_lp, scales, rng)
            collected[i] = draws[0, 0]
        assert -0.03 <= collected.mean() <= 0.03
        assert 0.94 <= collected.var() <= 1.06

    def test_tiny_scale_accepts_and_stays(self):
        rng = np.random.default_rng(1)
        draws = rng.standard_normal((200, 3))
        stats = KernelStats()
        out = rwm_step(draws, std_normal_lp, np.full(3, 1e-8), rng, stats=stats)
        assert stats.acceptance_rate > 0.999
        assert np.max(np.abs(out - draws)) < 1e-6

    def test_two_mode_occupancy(self):
        # symmetric mixture of normals at +/-3; by symmetry each mode holds
        # exactly half the mass, which a long mixed run must reproduce even
        # from a one-sided start
        def mixture_lp(draws):
            x = draws[:, 0]
            a = -0.5 * ((x - 3.0) / 0.5) ** 2
            b = -0.5 * ((x + 3.0) / 0.5) ** 2
            return np.logaddexp(a, b)

        rng = np.random.default_rng(2)
        draws = np.full((500, 1), -3.0)
        occupancy = []
        for step in range(1500):
            draws = rwm_step(draws, mixture_lp, np.array([2.0]), rng)
            if step >= 500:
                occupancy.append(np.mean(draws[:, 0] > 0))
        assert abs(np.mean(occupancy) - 0.5) < 0.02

    def test_nonfinite_proposal_rejected(self):
        def lp(draws):
            out = std_normal_lp(draws)
            out[np.abs(draws[:, 0]) > 1.0] = np.nan
            return out

        rng = np.random.default_rng(3)
        draws = np.zeros((100, 1))
        out = rwm_step(draws, lp, np.array([5.0]), rng, iterations=10)
        assert np.all(np.abs(out[:, 0]) <= 1.0)

    def test_preserves_gaussian_moments_one_application(self):
        # detailed-balance smoke test: one application to exact samples
        rng = np.random.default_rng(4)
        draws = rng.standard_normal((100_000, 2))
        out = rwm_step(draws, std_normal_lp, np.array([0.8, 0.8]), rng)
        se_mean = 1.0 / math.sqrt(out.shape[0])
        se_var = math.sqrt(2.0 / out.shape[0])
        assert np.all(np.abs(out.mean(axis=0)) < 3 * se_mean + 3 * se_mean)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 6 * se_var)


class TestHmc:
    def test_high_acceptance_on_gaussian(self):
        rng = np.random.default_rng(5)
        draws = rng.standard_normal((10_000, 4))
        stats = KernelStats()
        hmc_step(
            draws, std_normal_lp, std_normal_grad,
            eps=0.1, leapfrog_steps=10, inv_mass=np.ones(4), rng=rng, stats=stats,
        )
        assert stats.acceptance_rate > 0.9
        assert stats.divergences == 0

    def test_energy_conservation_small_step(self):
        # leapfrog is second order: energy drift at eps=1e-3 stays tiny
        rng = np.random.default_rng(6)
        pos = rng.standard_normal((1000, 3))
        inv_mass = np.ones(3)
        mom = rng.standard_normal((1000, 3))
        e0 = -std_normal_lp(pos) + _kinetic(mom, inv_mass)
        new_pos, new_mom, _ = _leapfrog(pos, mom, std_normal_grad, 1e-3, 50, inv_mass)
        e1 = -std_normal_lp(new_pos) + _kinetic(new_mom, inv_mass)
        assert np.max(np.abs(e1 - e0)) < 1e-4

    def test_preserves_gaussian_moments_one_application(self):
        rng = np.random.default_rng(7)
        draws = rng.standard_normal((100_000, 2))
        out = hmc_step(
            draws, std_normal_lp, std_normal_grad,
            eps=0.5, leapfrog_steps=5, inv_mass=np.ones(2), rng=rng,
        )
        se_mean = 1.0 / math.sqrt(out.shape[0])
        se_var = math.sqrt(2.0 / out.shape[0])
        assert np.all(np.abs(out.mean(axis=0)) < 6 * se_mean)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 6 * se_var)

    def test_divergence_flagged_and_rejected(self):
        # narrow target with a huge step: trajectories blow up
        def narrow_lp(draws):
            return -0.5 * np.sum((draws / 1e-4) ** 2, axis=1)

        def narrow_grad(draws):
            return -draws / 1e-8

        rng = np.random.default_rng(8)
        draws = 1e-4 * rng.standard_normal((100, 1))
        stats = KernelStats()
        out = hmc_step(
            draws, narrow_lp, narrow_grad,
            eps=10.0, leapfrog_steps=5, inv_mass=np.ones(1), rng=rng, stats=stats,
        )
        assert stats.divergences > 0
        np.testing.assert_array_equal(out, draws)

    def test_mass_matrix_scales_with_variances(self):
        # anisotropic Gaussian: using its variances as the inverse mass keeps
        # acceptance high at a step size that works for the unit case
        var = np.array([100.0, 0.01])

        def lp(draws):
            return -0.5 * np.sum(draws**2 / var, axis=1)

        def grad(draws):
            return -draws / var

        rng = np.random.default_rng(9)
        draws = rng.standard_normal((5000, 2)) * np.sqrt(var)
        stats = KernelStats()
        hmc_step(draws, lp, grad, eps=0.1, leapfrog_steps=10, inv_mass=var, rng=rng, stats=stats)
        assert stats.acceptance_rate > 0.9


class TestTuneStepSize:
    def test_reaches_target_acceptance(self):
        rng = np.random.default_rng(10)
        draws = rng.standard_normal((256, 3))
        eps = tune_step_size(
            draws, std_normal_lp, std_normal_grad,
            leapfrog_steps=10, inv_mass=np.ones(3), rng=rng, iterations=100,
        )
        stats = KernelStats()
        hmc_step(
            rng.standard_normal((5000, 3)), std_normal_lp, std_normal_grad,
            eps=eps, leapfrog_steps=10, inv_mass=np.ones(3), rng=rng, stats=stats,
        )
        assert 0.6 < stats.acceptance_rate <= 1.0
