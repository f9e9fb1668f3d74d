"""Built-in models: densities, gradients, predictives, generators."""

import math

import numpy as np
import pytest

from smccv.core import UnitIndex, build_lgo_scheme
from smccv.engine import derive_rng
from smccv.gibbs import ffbs
from smccv.models import (
    ConjugateData,
    ConjugateGaussianModel,
    ConjugateShape,
    DnsData,
    DnsModel,
    DnsShape,
    M5Shape,
    MultilevelNormalModel,
    RadonShape,
    SpatialData,
    SpatialMvnModel,
    factor_loadings,
    fold_deleted_predictive_log_density,
    generate_synthetic,
    posterior_mean_location,
)

GRADIENT_MODELS = []


def _make(kind):
    rng = derive_rng(77, hash(kind) % 100)
    if kind == "conjugate":
        data, _ = generate_synthetic("conjugate", ConjugateShape(groups=4, group_size=5), rng)
        return ConjugateGaussianModel(data, kappa=1.3, tau=0.7, sigma=0.9)
    if kind == "radon":
        data, _ = generate_synthetic("radon", RadonShape(groups=5, max_group_size=7), rng)
        return MultilevelNormalModel(data)
    if kind == "m5":
        data, _ = generate_synthetic(
            "m5", M5Shape(stores=3, departments=3, items_per_department=5), rng
        )
        return SpatialMvnModel(data)
    data, _ = generate_synthetic("dns", DnsShape(months=8, maturities=(2.0, 5.0, 10.0)), rng)
    return DnsModel(data)


ALL_KINDS = ("conjugate", "radon", "m5", "dns")
GRAD_KINDS = ("conjugate", "radon", "m5")


class TestUnitLogLik:
    def test_conjugate_standard_normal_point(self):
        data = ConjugateData(y=np.array([0.0]), group=np.array([1]))
        model = ConjugateGaussianModel(data, kappa=1, tau=1, sigma=1)
        theta = np.zeros(model.dim)  # location 0, effect 0
        got = model.unit_log_lik(theta, UnitIndex(1, 1))
        assert got == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-14)

    def test_spatial_identity_covariance_at_zero(self):
        s = 4
        data = SpatialData(y=np.zeros((1, s)), department=np.array([1]))
        model = SpatialMvnModel(data)
        theta = np.zeros(model.dim)  # mu=0, alpha=0, packed chol 0 => identity
        got = model.unit_log_lik(theta, UnitIndex(1, 1))
        assert got == pytest.approx(-s / 2 * math.log(2 * math.pi), abs=1e-12)

    def test_multilevel_matches_direct_density(self):
        model = _make("radon")
        rng = derive_rng(8, 0)
        theta = 0.3 * rng.standard_normal(model.dim)
        sigma = math.exp(theta[-1])
        coefs = theta[: 2 * model.n_groups].reshape(model.n_groups, 2)
        for unit in model.units()[:6]:
            j = model._obs_index[unit]
            y, x, g = model.data.y[j], model.data.x[j], model.data.group[j]
            mu = coefs[g - 1, 0] + coefs[g - 1, 1] * x
            direct = -0.5 * math.log(2 * math.pi) - math.log(sigma) - 0.5 * ((y - mu) / sigma) ** 2
            assert model.unit_log_lik(theta, unit) == pytest.approx(direct, abs=1e-12)


class TestLogTargetIdentity:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_all_exponents_one_is_prior_plus_likelihood(self, kind):
        model = _make(kind)
        rng = derive_rng(9, 1)
        draws = 0.2 * rng.standard_normal((3, model.dim))
        units = model.units()
        lt = model.log_target(draws, units, np.ones(len(units)))
        expect = model.log_prior(draws) + model.total_log_lik(draws)
        np.testing.assert_array_equal(lt, expect)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_exponent_removes_unit(self, kind):
        model = _make(kind)
        rng = derive_rng(9, 2)
        draws = 0.2 * rng.standard_normal((2, model.dim))
        unit = model.units()[0]
        lt = model.log_target(draws, [unit], np.zeros(1))
        expect = (
            model.log_prior(draws)
            + model.total_log_lik(draws)
            - model.unit_log_liks(draws, [unit])[:, 0]
        )
        np.testing.assert_allclose(lt, expect, atol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("kind", GRAD_KINDS)
    def test_matches_central_differences(self, kind):
        model = _make(kind)
        rng = derive_rng(10, 3)
        units = model.units()[:4]
        h = 1e-6
        for _ in range(10):
            theta = 0.4 * rng.standard_normal(model.dim)
            exps = rng.random(len(units))
            grad = model.grad_log_target(theta[None], units, exps)[0]
            fd = np.zeros_like(grad)
            for i in range(model.dim):
                tp, tm = theta.copy(), theta.copy()
                tp[i] += h
                tm[i] -= h
                fd[i] = (
                    model.log_target(tp[None], units, exps)[0]
                    - model.log_target(tm[None], units, exps)[0]
                ) / (2 * h)
            denom = np.maximum(np.abs(fd), 1.0)
            assert np.max(np.abs(grad - fd) / denom) < 1e-5

    @pytest.mark.parametrize("kind", GRAD_KINDS)
    def test_fast_total_gradient_matches_unit_sum(self, kind):
        model = _make(kind)
        rng = derive_rng(10, 4)
        draws = 0.4 * rng.standard_normal((5, model.dim))
        fast = model.grad_total_log_lik(draws)
        slow = model.grad_unit_log_liks_weighted(
            draws, model.units(), np.ones(len(model.units()))
        )
        np.testing.assert_allclose(fast, slow, atol=1e-10)


class TestPredictives:
    def test_singleton_fold_equals_unit_log_lik(self):
        model = _make("conjugate")
        theta = np.zeros((1, model.dim))
        unit = UnitIndex(2, 1)
        joint = model.joint_predictive_log_density(theta, [unit])
        assert joint[0] == model.unit_log_liks(theta, [unit])[0, 0]

    def test_two_standard_normal_units(self):
        data = ConjugateData(y=np.array([0.0, 0.0]), group=np.array([1, 1]))
        model = ConjugateGaussianModel(data)
        theta = np.zeros((1, model.dim))
        got = model.joint_predictive_log_density(theta, model.units())
        assert got[0] == pytest.approx(-math.log(2 * math.pi), abs=1e-12)

    def test_conjugate_lgo_integral_matches_closed_form(self):
        # Monte Carlo over the exact fold-deleted posterior must reproduce
        # the Gaussian-conditioning value
        kappa = tau = sigma = 1.0
        data, _ = generate_synthetic(
            "conjugate", ConjugateShape(groups=4, group_size=6), derive_rng(11, 0)
        )
        model = ConjugateGaussianModel(data)
        g = 2
        fold = [UnitIndex(g, i) for i in range(1, 7)]
        closed = fold_deleted_predictive_log_density(data, fold, kappa, tau, sigma)

        rng = derive_rng(11, 1)
        mask = data.group != g
        yk, gk = data.y[mask], data.group[mask]
        cov = kappa**2 + tau**2 * (gk[:, None] == gk[None, :]) + sigma**2 * np.eye(yk.size)
        sol = np.linalg.solve(cov, yk)
        mu_m = kappa**2 * np.sum(sol)
        mu_v = kappa**2 - kappa**4 * np.sum(np.linalg.solve(cov, np.ones(yk.size)))
        reps = []
        for _ in range(20):
            mu = rng.normal(mu_m, math.sqrt(mu_v), 4000)
            th = rng.normal(mu, tau)
            yg = data.y[data.group == g]
            logf = -3.0 * math.log(2 * math.pi * sigma**2) - 0.5 * (
                (yg[None, :] - th[:, None]) ** 2
            ).sum(axis=1) / sigma**2
            reps.append(np.logaddexp.reduce(logf) - math.log(4000))
        reps = np.array(reps)
        assert abs(reps.mean() - closed) < 3.5 * reps.std() / math.sqrt(reps.size)

    def test_step_ahead_is_unit_log_lik(self):
        model = _make("dns")
        rng = derive_rng(11, 2)
        draws = model.initial_draw(rng)[None, :]
        got = model.step_ahead_log_density(draws, 1, 5)
        expect = model.unit_log_liks(draws, [UnitIndex(1, 5)])[:, 0]
        np.testing.assert_array_equal(got, expect)

    def test_dns_two_step_matches_kalman_prediction(self):
        # fixed covariances: FFBS paths given y_{1:t}, then the Monte Carlo
        # average of the unit density at t+2 must match the analytic
        # two-step Kalman predictive
        rng = derive_rng(11, 3)
        shape = DnsShape(months=10, maturities=(2.0, 10.0, 30.0))
        data, truth = generate_synthetic("dns", shape, rng)
        model = DnsModel(data)
        design = model.design
        cov_y, cov_b = truth["cov_y"], truth["cov_beta"]
        t_cut, h = 8, 2
        mean0, cov0 = np.zeros(3), 10.0 * np.eye(3)

        # forward filter to t_cut (independent implementation)
        fm, fp = mean0, cov0
        for t in range(t_cut):
            pp = fp + cov_b
            innov = design @ pp @ design.T + cov_y
            gain = pp @ design.T @ np.linalg.inv(innov)
            fm = fm + gain @ (data.y[t] - design @ fm)
            fp = pp - gain @ design @ pp
        pred_cov = design @ (fp + h * cov_b) @ design.T + cov_y
        resid = data.y[t_cut + h - 1] - design @ fm
        chol = np.linalg.cholesky(pred_cov)
        z = np.linalg.solve(chol, resid)
        analytic = (
            -0.5 * len(resid) * math.log(2 * math.pi)
            - np.sum(np.log(np.diag(chol)))
            - 0.5 * z @ z
        )

        r = 10_000
        paths = ffbs(
            data.y[:t_cut],
            design,
            np.tile(cov_y, (r, 1, 1)),
            np.tile(cov_b, (r, 1, 1)),
            np.tile(mean0, (r, 1)),
            np.tile(cov0, (r, 1, 1)),
            1.0,
            derive_rng(11, 4),
            t_total=10,
        )
        draws = model.pack(paths, np.tile(cov_y, (r, 1, 1)), np.tile(cov_b, (r, 1, 1)))
        logf = model.step_ahead_log_density(draws, 1, t_cut + h)
        est = np.logaddexp.reduce(logf) - math.log(r)
        # batch-means standard error of the log mean
        batches = np.array(
            [np.logaddexp.reduce(b) - math.log(b.size) for b in np.split(logf, 20)]
        )
        f = np.exp(batches - batches.max())
        se = f.std(ddof=1) / math.sqrt(20) / f.mean()
        assert abs(est - analytic) < 3 * se + 0.02

    def test_static_states_make_horizons_coincide(self):
        # with zero innovation covariance the k-step-ahead predictive law is
        # horizon independent; check on the analytic side
        design = factor_loadings((2.0, 10.0), 0.0609)
        cov_y = 0.1 * np.eye(2)
        fp = 0.3 * np.eye(3)
        one = design @ (fp + 1 * 0.0 * np.eye(3)) @ design.T + cov_y
        two = design @ (fp + 2 * 0.0 * np.eye(3)) @ design.T + cov_y
        np.testing.assert_allclose(one, two, atol=1e-15)


class TestDnsStructure:
    def test_loading_columns(self):
        tau = np.array([2.0, 5.0])
        lam = 0.0609
        x = factor_loadings(tau, lam)
        slope = (1 - np.exp(-lam * tau)) / (lam * tau)
        np.testing.assert_allclose(x[:, 0], 1.0)
        np.testing.assert_allclose(x[:, 1], slope)
        np.testing.assert_allclose(x[:, 2], slope - np.exp(-lam * tau))

    def test_long_maturity_limit(self):
        x = factor_loadings([1e6], 0.0609)[0]
        assert abs(x[0] - 1.0) < 1e-12
        assert abs(x[1]) < 1e-3
        assert abs(x[2]) < 1e-3

    def test_deletion_pattern_rejects_interior_holes(self):
        model = _make("dns")
        with pytest.raises(ValueError, match="ordered suffix"):
            model.deletion_pattern([UnitIndex(1, 3)], np.zeros(1))

    def test_deletion_pattern_suffix(self):
        model = _make("dns")
        t = model.group_sizes[0]
        units = [UnitIndex(1, t), UnitIndex(1, t - 1)]
        n_obs, rho = model.deletion_pattern(units, np.array([0.0, 0.25]))
        assert n_obs == t - 1 and rho == 0.25


class TestOracleHelpers:
    def test_posterior_mean_location_single_obs(self):
        # one observation: posterior mean of the location is
        # y * kappa^2 / (kappa^2 + tau^2 + sigma^2)
        data = ConjugateData(y=np.array([2.0]), group=np.array([1]))
        got = posterior_mean_location(data, 1.0, 1.0, 1.0)
        assert got == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_fold_deletion_of_everything_uses_prior(self):
        data = ConjugateData(y=np.array([0.5, -0.5]), group=np.array([1, 2]))
        fold = [UnitIndex(1, 1), UnitIndex(2, 1)]
        got = fold_deleted_predictive_log_density(data, fold, 1.0, 1.0, 1.0)
        cov = np.array([[3.0, 1.0], [1.0, 3.0]])
        chol = np.linalg.cholesky(cov)
        z = np.linalg.solve(chol, data.y)
        expect = -math.log(2 * math.pi) - np.sum(np.log(np.diag(chol))) - 0.5 * z @ z
        assert got == pytest.approx(expect, abs=1e-12)


class TestSyntheticGenerators:
    def test_radon_shape(self):
        data, truth = generate_synthetic(
            "radon", RadonShape(groups=20, max_group_size=30), derive_rng(12, 0)
        )
        sizes = data.group_sizes()
        assert len(sizes) == 20
        assert max(sizes) == 30 and min(sizes) >= 1
        assert set(np.unique(data.x)) <= {0.0, 1.0}
        assert truth["coefs"].shape == (20, 2)

    def test_dns_shape(self):
        data, truth = generate_synthetic("dns", DnsShape(months=60), derive_rng(12, 1))
        assert data.y.shape == (60, 5)
        assert data.maturities == (2.0, 5.0, 10.0, 20.0, 30.0)
        assert data.decay == 0.0609

    def test_m5_shape(self):
        data, truth = generate_synthetic(
            "m5", M5Shape(stores=10, departments=7, items_per_department=30), derive_rng(12, 2)
        )
        assert data.y.shape == (210, 10)
        assert data.group_sizes() == (30,) * 7

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            generate_synthetic("mystery", None, derive_rng(12, 3))
