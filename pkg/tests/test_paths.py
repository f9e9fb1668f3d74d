"""Exponent schedules, incremental weights and the ESS-target solver."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smccv.core import build_leo_schedule, build_lgo_scheme
from smccv.models import ConjugateGaussianModel, ConjugateShape, generate_synthetic
from smccv.paths import (
    DeletionPath,
    incremental_log_weights,
    log_incremental_weight,
    ordered_exponent,
    path_for_fold,
    solve_next_n,
    tempering_exponent,
)
from smccv.weights import ess, normalize


class TestTemperingExponent:
    def test_endpoints(self):
        assert tempering_exponent(0.0, 5) == 1.0
        assert tempering_exponent(5.0, 5) == 0.0

    def test_linear_interior(self):
        assert tempering_exponent(1.0, 4) == pytest.approx(0.75)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            tempering_exponent(-0.1, 4)
        with pytest.raises(ValueError):
            tempering_exponent(4.1, 4)


class TestOrderedExponent:
    def test_undeleted_at_start(self):
        assert ordered_exponent(0.0, 1) == 1.0

    def test_fractional_boundary(self):
        assert ordered_exponent(2.5, 3) == pytest.approx(0.5)

    def test_clamped_to_zero(self):
        assert ordered_exponent(5.0, 2) == 0.0

    @given(
        st.floats(min_value=0, max_value=10, allow_nan=False),
        st.integers(min_value=1, max_value=10),
    )
    def test_range_and_integer_semantics(self, n, rank):
        value = ordered_exponent(n, rank)
        assert 0.0 <= value <= 1.0
        if n == int(n):
            assert value == (0.0 if rank <= n else 1.0)


class TestIncrementalWeights:
    def test_single_unit_partial(self):
        liks = np.array([[-2.0]])
        path = DeletionPath(family="tempering", length=1.0)
        got = incremental_log_weights(liks, path, 0.0, 0.6)  # exponent 1 -> 0.4
        assert got[0] == pytest.approx((0.4 - 1.0) * (-2.0))

    def test_full_deletion_is_reciprocal_likelihood(self):
        liks = np.array([[-2.0]])
        path = DeletionPath(family="tempering", length=1.0)
        assert incremental_log_weights(liks, path, 0.0, 1.0)[0] == pytest.approx(2.0)

    def test_zero_move_is_zero(self):
        liks = np.random.default_rng(0).normal(size=(10, 3))
        path = DeletionPath(family="tempering", length=3.0)
        np.testing.assert_array_equal(
            incremental_log_weights(liks, path, 1.2, 1.2), np.zeros(10)
        )

    @given(
        st.floats(min_value=0, max_value=4, allow_nan=False),
        st.floats(min_value=0, max_value=4, allow_nan=False),
        st.floats(min_value=0, max_value=4, allow_nan=False),
    )
    def test_additivity_exact(self, a, b, c):
        n0, n1, n2 = sorted((a, b, c))
        rng = np.random.default_rng(1)
        liks = rng.normal(size=(20, 4))
        for family, ranks in (("tempering", None), ("ordered", np.arange(1.0, 5.0))):
            path = DeletionPath(family=family, length=4.0, ranks=ranks)
            split = incremental_log_weights(liks, path, n0, n1) + incremental_log_weights(
                liks, path, n1, n2
            )
            direct = incremental_log_weights(liks, path, n0, n2)
            np.testing.assert_allclose(split, direct, atol=1e-12)

    def test_scalar_wrapper_matches_and_flags_bad_units(self):
        data, _ = generate_synthetic(
            "conjugate", ConjugateShape(groups=2, group_size=2), np.random.default_rng(2)
        )
        model = ConjugateGaussianModel(data)
        fold = list(build_lgo_scheme(model.group_sizes).folds[0])
        theta = np.zeros(model.dim)
        got = log_incremental_weight(theta, fold, 0.0, 2.0, model)
        liks = model.unit_log_liks(theta[None], fold)
        assert got == pytest.approx(-liks.sum())


class TestPathForFold:
    def test_sequential_is_ordered_with_ranks(self):
        scheme = build_leo_schedule([4], group=1)
        path = path_for_fold(scheme, 0)
        assert path.family == "ordered"
        assert path.length == 4.0
        np.testing.assert_array_equal(path.ranks, [1.0, 2.0, 3.0, 4.0])

    def test_across_group_length_counts_ranks_not_units(self):
        scheme = build_leo_schedule([3, 3], group=-1)
        path = path_for_fold(scheme, 0)
        assert path.length == 3.0
        assert len(scheme.folds[0]) == 6

    def test_default_tempering(self):
        scheme = build_lgo_scheme([5, 2])
        path = path_for_fold(scheme, 0)
        assert path.family == "tempering" and path.length == 5.0


class GridOracle:
    """Brute-force grid search for the ESS crossing, the solver's oracle."""

    @staticmethod
    def solve(liks, path, n_prev, n_cap, target, step=1e-6):
        grid = np.arange(n_prev + step, n_cap, step)
        for n in grid:
            lw = incremental_log_weights(liks, path, n_prev, n)
            if ess(normalize(lw)) < target:
                return n
        return n_cap


class TestSolveNextN:
    def test_identical_particles_jump_to_cap(self):
        liks = np.full((50, 3), -1.3)
        path = DeletionPath(family="tempering", length=3.0)
        sol = solve_next_n(liks, path, 0.0, 3.0, target_ess=25.0, tol=1e-3)
        assert sol.at_cap and sol.n_next == 3.0
        assert sol.ess == pytest.approx(50.0)

    def test_two_particle_crossing_matches_grid_oracle(self):
        # two particles, fold log-liks {0, -4}: ESS(n) = (1+e^{4n})^2/(1+e^{8n});
        # target 1.6 crosses at n = ln(3)/4 (grid oracle confirms analytically)
        liks = np.array([[0.0], [-4.0]])
        path = DeletionPath(family="tempering", length=1.0)
        tol = 1e-3
        sol = solve_next_n(liks, path, 0.0, 1.0, target_ess=1.6, tol=tol)
        oracle = GridOracle.solve(liks, path, 0.0, 1.0, 1.6)
        analytic = math.log(3.0) / 4.0
        assert oracle == pytest.approx(analytic, abs=2e-6)
        assert abs(sol.n_next - oracle) <= tol + 2e-6
        assert not sol.at_cap

    def test_cap_returned_exactly_at_checkpoint(self):
        rng = np.random.default_rng(3)
        liks = 0.01 * rng.normal(size=(100, 5))
        path = DeletionPath(family="ordered", length=5.0, ranks=np.arange(1.0, 6.0))
        sol = solve_next_n(liks, path, 1.0, 2.0, target_ess=50.0, tol=1e-3)
        assert sol.at_cap and sol.n_next == 2.0

    def test_realized_ess_within_tolerance_band(self):
        rng = np.random.default_rng(4)
        liks = rng.normal(size=(500, 8)) * 2.0
        path = DeletionPath(family="tempering", length=8.0)
        target = 250.0
        tol = 1e-3 * 8.0
        sol = solve_next_n(liks, path, 0.0, 8.0, target, tol)
        assert 0.0 < sol.n_next <= 8.0
        if not sol.at_cap:
            # epsilon: measured ESS change across one tolerance-width step
            lw_lo = incremental_log_weights(liks, path, 0.0, sol.n_next - tol)
            eps = ess(normalize(lw_lo)) - sol.ess
            assert sol.ess >= target - max(eps, 0.0) - 1e-9

    def test_invalid_bracket(self):
        liks = np.zeros((30, 2))
        path = DeletionPath(family="tempering", length=2.0)
        with pytest.raises(ValueError):
            solve_next_n(liks, path, 1.5, 1.0, 15.0, 1e-3)
