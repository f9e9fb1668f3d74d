"""Log-weight arithmetic, ESS, generalized Pareto fitting and smoothing."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smccv.weights import (
    DegenerateWeightsError,
    TailTooSmallError,
    WeightVector,
    ess,
    gpd_fit,
    gpd_quantile,
    log_sum_exp,
    normalize,
    pareto_smooth,
    tail_length,
    weighted_log_estimand,
)


def simulate_gpd(k: float, sigma: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampler used as the independent oracle for gpd_fit."""
    u = rng.random(n)
    if k == 0.0:
        return -sigma * np.log1p(-u)
    return sigma / k * ((1.0 - u) ** -k - 1.0)


finite_logw = st.lists(
    st.floats(min_value=-30, max_value=30, allow_nan=False), min_size=2, max_size=80
)


class TestLogSumExp:
    def test_two_zeros(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_extreme_shift_no_underflow(self):
        assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000 + math.log(2), abs=1e-9)

    def test_singleton_identity(self):
        assert log_sum_exp([5.0]) == 5.0

    def test_all_neg_inf(self):
        assert log_sum_exp([-math.inf, -math.inf]) == -math.inf

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            log_sum_exp([])

    @given(finite_logw, st.floats(min_value=-500, max_value=500, allow_nan=False))
    def test_shift_invariance(self, xs, c):
        a = log_sum_exp(xs)
        b = log_sum_exp([x + c for x in xs])
        assert b == pytest.approx(a + c, rel=1e-12, abs=1e-9)


class TestNormalize:
    def test_uniform(self):
        w = normalize([0.0, 0.0, 0.0])
        np.testing.assert_allclose(w.normalized, [1 / 3] * 3)

    def test_two_to_one(self):
        w = normalize([math.log(2), 0.0])
        np.testing.assert_allclose(w.normalized, [2 / 3, 1 / 3])

    def test_shift_invariance_example(self):
        for c in (-700.0, 0.0, 55.5):
            w = normalize([c, c + math.log(3)])
            np.testing.assert_allclose(w.normalized, [0.25, 0.75], atol=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateWeightsError):
            normalize([-math.inf, -math.inf])

    @given(finite_logw)
    def test_sums_to_one(self, xs):
        assert normalize(xs).normalized.sum() == pytest.approx(1.0, abs=1e-12)


class TestEss:
    def test_uniform_is_r(self):
        assert ess(np.full(4, 0.25)) == pytest.approx(4.0)

    def test_point_mass_is_one(self):
        assert ess(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)

    def test_half_half(self):
        assert ess(np.array([0.5, 0.5, 0.0, 0.0])) == pytest.approx(2.0)

    @given(finite_logw)
    def test_bounds_and_permutation_invariance(self, xs):
        w = normalize(xs)
        value = ess(w)
        assert 1.0 - 1e-9 <= value <= len(xs) + 1e-9
        perm = np.random.default_rng(0).permutation(len(xs))
        assert ess(w.normalized[perm]) == pytest.approx(value, rel=1e-12)

    @given(finite_logw, st.floats(min_value=-100, max_value=100, allow_nan=False))
    def test_shift_invariance(self, xs, c):
        a = ess(normalize(xs))
        b = ess(normalize([x + c for x in xs]))
        assert b == pytest.approx(a, rel=1e-9)


class TestGpdFit:
    @pytest.mark.parametrize(
        "k_true,lo,hi",
        [(0.0, -0.1, 0.1), (0.5, 0.4, 0.6), (-0.2, -0.3, -0.1)],
    )
    def test_shape_recovery(self, k_true, lo, hi):
        rng = np.random.default_rng(42)
        x = np.sort(simulate_gpd(k_true, 1.0, 2000, rng))
        k_hat, sigma_hat = gpd_fit(x)
        assert lo <= k_hat <= hi
        assert sigma_hat > 0

    def test_scale_equivariance(self):
        rng = np.random.default_rng(7)
        x = np.sort(simulate_gpd(0.3, 1.0, 500, rng))
        k1, s1 = gpd_fit(x)
        for c in (1e-6, 3.7, 1e8):
            k2, s2 = gpd_fit(c * x)
            assert k2 == pytest.approx(k1, abs=1e-8)
            assert s2 == pytest.approx(c * s1, rel=1e-8)

    def test_tail_too_small(self):
        with pytest.raises(TailTooSmallError):
            gpd_fit(np.array([1.0, 2.0, 3.0, 4.0]))

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            gpd_fit(np.array([3.0, 1.0, 2.0, 4.0, 5.0]))


class TestGpdQuantile:
    def test_exponential_limit(self):
        p = np.array([0.1, 0.5, 0.9])
        np.testing.assert_allclose(gpd_quantile(p, 0.0, 2.0), -2.0 * np.log1p(-p))

    def test_inverts_cdf(self):
        # CDF(x) = 1 - (1 + k x / sigma)^(-1/k)
        k, sigma = 0.4, 1.5
        p = np.array([0.2, 0.6, 0.95])
        x = gpd_quantile(p, k, sigma)
        cdf = 1.0 - (1.0 + k * x / sigma) ** (-1.0 / k)
        np.testing.assert_allclose(cdf, p, atol=1e-12)


class TestParetoSmooth:
    def test_tail_length_rule(self):
        assert tail_length(25) == 5
        assert tail_length(1000) == math.ceil(3 * math.sqrt(1000))
        assert tail_length(10000) == 300  # 3 sqrt(1e4) = 300 < 0.2e4

    def test_uniform_weights_unchanged(self):
        diag = pareto_smooth(np.zeros(100))
        np.testing.assert_allclose(diag.smoothed.normalized, np.full(100, 0.01), atol=1e-15)
        assert math.isinf(diag.k_hat)  # no exceedances above the cutoff: fit fails

    def test_outlier_pulled_down(self):
        rng = np.random.default_rng(3)
        lw = rng.normal(size=1000)
        lw[17] += 50.0
        raw_max = normalize(lw).normalized.max()
        diag = pareto_smooth(lw)
        assert diag.smoothed.normalized.max() < raw_max
        assert diag.smoothed.normalized.sum() == pytest.approx(1.0, abs=1e-9)

    def test_gpd_tail_khat_recovery(self):
        # raw weights with a genuine GPD(k=0.3) upper tail
        rng = np.random.default_rng(11)
        r = 4000
        body = rng.random(r) * 0.5
        m = tail_length(r)
        tail = 0.5 + simulate_gpd(0.3, 0.5, m, rng)
        w = np.concatenate([body[: r - m], tail])
        diag = pareto_smooth(np.log(w))
        assert 0.2 <= diag.k_hat <= 0.4

    def test_every_smoothed_weight_capped_at_raw_max(self):
        # the cap applies to the weights themselves (shifted log domain, raw
        # maximum at zero); renormalization may then lift the share of the
        # capped weight, which is fine
        rng = np.random.default_rng(5)
        for trial in range(10):
            lw = rng.standard_t(df=2, size=200)
            diag = pareto_smooth(lw)
            if math.isfinite(diag.k_hat):
                assert diag.smoothed.log_w.max() <= 1e-15

    def test_too_few_particles(self):
        with pytest.raises(ValueError):
            pareto_smooth(np.zeros(24))

    def test_degenerate(self):
        with pytest.raises(DegenerateWeightsError):
            pareto_smooth(np.full(50, -math.inf))


class TestWeightedLogEstimand:
    def test_constant_estimand(self):
        w = normalize(np.zeros(8))
        assert weighted_log_estimand(w, np.full(8, -2.5)) == pytest.approx(-2.5, abs=1e-12)

    def test_point_mass(self):
        w = WeightVector(
            log_w=np.array([0.0, -math.inf, -math.inf]),
            normalized=np.array([1.0, 0.0, 0.0]),
        )
        assert weighted_log_estimand(w, np.array([-3.7, 99.0, 99.0])) == pytest.approx(-3.7)

    def test_direct_arithmetic(self):
        w = normalize([math.log(2), 0.0])  # [2/3, 1/3]
        got = weighted_log_estimand(w, np.array([0.0, math.log(4)]))
        assert got == pytest.approx(math.log(2), abs=1e-12)

    @given(finite_logw)
    def test_uniform_weights_reduce_to_log_mean(self, xs):
        r = len(xs)
        w = normalize(np.zeros(r))
        got = weighted_log_estimand(w, np.array(xs))
        assert got == pytest.approx(log_sum_exp(xs) - math.log(r), rel=1e-9, abs=1e-9)
