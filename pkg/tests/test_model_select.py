import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flni import Penalties, build_chain_graph, build_grid_graph, fit_flni, fit_fni
from flni.model_select import (
    DegenerateEstimateWarning,
    cp_statistic,
    df_flni,
    df_fni,
    estimate_sigma2_mad,
    fused_groups,
    sweep_path,
)

from conftest import random_dag


class TestFusedGroups:
    def test_two_runs(self):
        gp = fused_groups(np.array([0.5, 0.5, 0.2, 0.2, 0.2]), build_chain_graph(5))
        assert gp.groups == ((0, 1), (2, 3, 4))

    def test_constant(self):
        gp = fused_groups(np.full(12, 1.7), build_grid_graph(3, 4))
        assert gp.n_groups == 1

    def test_zero_flag(self):
        gp = fused_groups(np.array([0.5, 0.5, 0.0, 0.0, 0.2]), build_chain_graph(5))
        assert gp.groups == ((0, 1), (2, 3), (4,))
        assert gp.is_zero == (False, True, False)

    def test_tolerance_relative_to_scale(self):
        beta = np.array([1000.0, 1000.0 + 1e-4])
        assert fused_groups(beta, build_chain_graph(2), 1e-6).n_groups == 1
        assert fused_groups(beta, build_chain_graph(2), 1e-8).n_groups == 2

    def test_equal_values_not_adjacent_stay_apart(self):
        gp = fused_groups(np.array([1.0, 0.0, 1.0]), build_chain_graph(3))
        assert gp.n_groups == 3


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_groups_partition_vertices(seed):
    rng = np.random.default_rng(seed)
    g = random_dag(rng, int(rng.integers(2, 15)), 30)
    beta = rng.choice([0.0, 0.5, 1.0], size=g.n_vertices)
    gp = fused_groups(beta, g)
    flat = sorted(v for grp in gp.groups for v in grp)
    assert flat == list(range(g.n_vertices))
    labels = gp.labels(g.n_vertices)
    thr = gp.equality_tolerance * max(1.0, np.max(np.abs(beta)))
    for s, t in g.edges:
        if labels[s] == labels[t]:
            assert abs(beta[s] - beta[t]) <= thr
        else:
            assert abs(beta[s] - beta[t]) > thr


def _fit_with_beta(beta, g):
    # Zero penalties: the fit reproduces the data exactly.
    return fit_flni(np.asarray(beta, dtype=float), g, Penalties())


class TestDegreesOfFreedom:
    def test_distinct_values(self):
        fit = fit_fni(np.array([3.0, 1.0, 2.0, 5.0]), build_chain_graph(4), 0.0, 0.0)
        assert df_fni(fit) == 4

    def test_fully_pooled(self):
        fit = fit_fni(np.array([3.0, 1.0, 2.0]), build_chain_graph(3), 0.0, 100.0)
        assert df_fni(fit) == 1

    def test_two_groups(self):
        fit = _fit_with_beta([0.5, 0.5, 0.2, 0.2, 0.2], build_chain_graph(5))
        assert df_fni(fit) == 2

    def test_df_fni_rejects_lasso_fit(self):
        fit = fit_flni(np.ones(3), build_chain_graph(3), Penalties(0, 0.1, 0))
        with pytest.raises(ValueError):
            df_fni(fit)

    def test_all_zero(self):
        fit = _fit_with_beta(np.zeros(4), build_chain_graph(4))
        assert df_flni(fit) == 0

    def test_nonzero_groups(self):
        fit = _fit_with_beta([0.5, 0.5, 0.0, 0.0, 0.2], build_chain_graph(5))
        assert df_flni(fit) == 2

    def test_flni_equals_fni_without_zeros(self):
        fit = _fit_with_beta([0.5, 0.5, 0.3, 0.3, 0.2], build_chain_graph(5))
        assert df_flni(fit) == df_fni(fit) == 3


class TestCp:
    def test_arithmetic(self):
        fit = fit_fni(np.array([1.0, 0.0]), build_chain_graph(2), 0.0, 0.3)
        assert cp_statistic([1.0, 0.0], fit, 1.0) == pytest.approx(2.18, abs=1e-12)

    def test_exact_fit(self):
        y = np.array([1.0, 4.0, 2.0])
        fit = fit_fni(y, build_chain_graph(3), 0.0, 0.0)
        assert cp_statistic(y, fit, 0.5) == pytest.approx(3 * 0.5)

    def test_zero_fit(self):
        y = np.array([1.0, -2.0])
        fit = fit_flni(y, build_chain_graph(2), Penalties(0, 10.0, 0))
        assert cp_statistic(y, fit, 2.0) == pytest.approx(5.0 - 4.0)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
    def test_sigma2_validated(self, bad):
        fit = fit_fni(np.ones(2), build_chain_graph(2), 0.0, 0.0)
        with pytest.raises(ValueError):
            cp_statistic(np.ones(2), fit, bad)

    def test_bit_stable(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=10)
        fit = fit_fni(y, build_chain_graph(10), 0.1, 0.3)
        assert cp_statistic(y, fit, 0.7) == cp_statistic(y, fit, 0.7)


class TestSweep:
    def test_single_point(self):
        res = sweep_path(np.array([1.0, 0.0]), build_chain_graph(2), [Penalties(0, 0, 0.3)], 1.0)
        assert len(res.entries) == 1 and res.best_index == 0

    def test_noiseless_isotonic(self):
        y = np.array([0.0, 1.0, 2.0, 3.0])
        res = sweep_path(y, build_chain_graph(4), [Penalties(), Penalties(0, 0, 1.0)], 0.25)
        assert res.entries[0].cp == pytest.approx(4 * 0.25)

    def test_tie_goes_to_first(self):
        y = np.array([0.3, -0.1, 0.8])
        p = Penalties(0.1, 0.0, 0.2)
        res = sweep_path(y, build_chain_graph(3), [p, p], 1.0)
        assert res.entries[0].cp == res.entries[1].cp
        assert res.best_index == 0

    def test_best_is_minimum(self):
        rng = np.random.default_rng(9)
        y = np.repeat([0.0, 2.0, 1.0], 10) + 0.3 * rng.normal(size=30)
        grid = [Penalties(0, 0, v) for v in (0.0, 0.1, 0.5, 1.0, 3.0)]
        res = sweep_path(y, build_chain_graph(30), grid, 0.09)
        assert res.cp[res.best_index] == res.cp.min()

    def test_thread_count_does_not_change_results(self):
        rng = np.random.default_rng(10)
        g = build_grid_graph(4, 4)
        y = rng.normal(size=16)
        grid = [Penalties(a, b, c) for a in (0, 0.2) for b in (0, 0.1) for c in (0, 0.5)]
        one = sweep_path(y, g, grid, 1.0, n_jobs=1)
        four = sweep_path(y, g, grid, 1.0, n_jobs=4)
        for a, b in zip(one.entries, four.entries):
            assert a.fit.beta.tobytes() == b.fit.beta.tobytes() and a.cp == b.cp

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            sweep_path(np.zeros(2), build_chain_graph(2), [], 1.0)

    def test_warm_start_matches_cold(self):
        rng = np.random.default_rng(14)
        g = build_chain_graph(25)
        y = rng.normal(size=25)
        prev = None
        for lam in (0.1, 0.2, 0.4, 0.8):
            cold = fit_fni(y, g, 0.1, lam)
            warm = fit_fni(y, g, 0.1, lam, nu0=None if prev is None else prev.dual.nu)
            np.testing.assert_allclose(warm.beta, cold.beta, atol=1e-8)
            prev = warm


class TestSigmaEstimate:
    def test_long_noisy_chain(self):
        rng = np.random.default_rng(2024)
        y = 4.0 + rng.normal(size=10_000)
        s2 = estimate_sigma2_mad(y, build_chain_graph(10_000))
        assert abs(s2 - 1.0) <= 0.2

    def test_constant_is_degenerate(self):
        with pytest.warns(DegenerateEstimateWarning):
            assert estimate_sigma2_mad(np.ones(5), build_chain_graph(5)) == 0.0

    def test_single_difference(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            s2 = estimate_sigma2_mad(np.array([0.0, 1.0]), build_chain_graph(2))
        assert s2 == pytest.approx((1 / (math.sqrt(2) * 0.6745)) ** 2)

    def test_no_edges(self):
        with pytest.raises(ValueError):
            estimate_sigma2_mad(np.ones(1), build_grid_graph(1, 1))
