from __future__ import annotations

import numpy as np
import pytest

from oracles import plain_em, scalar_mean_oracle, scalar_var_oracle
from penclust.em import (
    StopRule,
    adaptive_weights,
    e_step,
    em_fit,
    penalized_trace_drops,
    update_common_variance,
    update_mean,
    update_pi,
    update_variance_scheme_one,
    update_variance_scheme_two,
)
from penclust.errors import ConfigError, EmptyCluster
from penclust.model import (
    VARIANCE_FLOOR,
    CovMode,
    Dataset,
    FitStatus,
    MixtureParams,
    PenaltyConfig,
    Scheme,
    standardize,
)
from penclust.selection import kmeans_init


def _raw(x):
    x = np.asarray(x, dtype=float)
    x = x.reshape(-1, 1) if x.ndim == 1 else x
    return Dataset(x, False, np.zeros(x.shape[1]), np.ones(x.shape[1]))


class TestEStep:
    def test_single_component(self):
        p = MixtureParams(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        tau = e_step(_raw(np.random.default_rng(0).normal(size=(5, 2))), p)
        np.testing.assert_array_equal(tau, 1.0)

    def test_identical_components_return_pi(self):
        p = MixtureParams(np.array([0.3, 0.7]), np.zeros((2, 1)), np.ones((2, 1)))
        tau = e_step(_raw([0.0, 1.0, -2.0]), p)
        np.testing.assert_allclose(tau, [[0.3, 0.7]] * 3, atol=1e-15)

    def test_density_ratio(self):
        p = MixtureParams(np.array([0.5, 0.5]), np.array([[0.0], [2.0]]), np.ones((2, 1)))
        tau = e_step(_raw([0.0]), p)
        assert tau[0, 0] == pytest.approx(0.8807971, abs=1e-7)
        assert tau[0, 0] == pytest.approx(1 / (1 + np.exp(-2.0)))

    def test_far_points_do_not_underflow(self):
        p = MixtureParams(np.array([0.5, 0.5]), np.array([[0.0], [1.0]]), np.full((2, 1), 1e-6))
        tau = e_step(_raw([1e3]), p)
        assert np.all(np.isfinite(tau))
        assert tau.sum() == pytest.approx(1.0)


class TestProportions:
    def test_hard_counts(self):
        tau = np.array([[1, 0], [1, 0], [1, 0], [0, 1]], dtype=float)
        np.testing.assert_allclose(update_pi(tau), [0.75, 0.25])

    def test_column_sums(self):
        tau = np.array([[0.5, 0.5], [0.5, 0.5], [0.25, 0.75], [0.25, 0.75]])
        np.testing.assert_allclose(update_pi(tau), [0.375, 0.625])


class TestMean:
    def test_no_penalty_gives_weighted_mean(self):
        tau = np.array([0.2, 0.5, 1.0])
        x = np.array([1.0, -3.0, 2.0])
        assert update_mean(tau, x, 1.7, 0.0) == pytest.approx(tau @ x / tau.sum())

    def test_threshold(self):
        assert update_mean(np.ones(4), np.array([1.0, -1.0, 0.5, 0.5]), 1.0, 1.0) == 0.0

    def test_soft_threshold_value(self):
        assert update_mean(np.ones(4), np.array([1.0, 2.0, 3.0, 4.0]), 1.0, 2.0) == pytest.approx(2.0)

    def test_against_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            tau = rng.uniform(0.1, 1, 12)
            x = rng.normal(0.5, 1, 12)
            s2, lam = rng.uniform(0.3, 3), rng.uniform(0, 5)
            m_opt, _ = scalar_mean_oracle(tau, x, s2, lam)
            assert update_mean(tau, x, s2, lam) == pytest.approx(m_opt, abs=1e-7)

    def test_empty_component(self):
        with pytest.raises(EmptyCluster):
            update_mean(np.zeros(3), np.ones(3), 1.0, 0.0)


class TestCommonVariance:
    def test_single_component_on_standardized_data(self):
        data = standardize(np.random.default_rng(0).normal(size=(40, 3)))
        s2 = update_common_variance(np.ones((40, 1)), data, np.zeros((1, 3)))
        np.testing.assert_allclose(s2, 1.0, atol=1e-10)

    def test_zero_spread_is_floored(self):
        tau = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
        s2 = update_common_variance(tau, _raw([1.0, 1.0, 5.0, 5.0]), np.array([[1.0], [5.0]]))
        assert s2[0] == VARIANCE_FLOOR

    def test_pooled_value(self):
        tau = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
        s2 = update_common_variance(tau, _raw([0.0, 2.0, 10.0, 14.0]), np.array([[1.0], [12.0]]))
        assert s2[0] == pytest.approx(2.5)


class TestVarianceSchemes:
    def test_scheme_one_no_penalty(self):
        tau = np.ones(4)
        x = np.array([0.0, 1.0, 3.0, 4.0])
        assert update_variance_scheme_one(tau, x, 2.0, 0.0) == pytest.approx(2.5)

    def test_scheme_one_threshold(self):
        # b=10, c=12 through 20 unit-weight residuals with sum of squares 24
        x = np.full(20, np.sqrt(1.2))
        assert update_variance_scheme_one(np.ones(20), x, 0.0, 3.0) == 1.0

    def test_scheme_one_closed_form(self):
        x = np.full(20, np.sqrt(2.0))
        s = update_variance_scheme_one(np.ones(20), x, 0.0, 2.0)
        assert s == pytest.approx(1.5311288, abs=1e-7)
        assert 2 * s * s + 10 * s - 20 == pytest.approx(0.0, abs=1e-10)

    def test_scheme_two_threshold(self):
        x = np.full(20, np.sqrt(1.2))
        assert update_variance_scheme_two(np.ones(20), x, 0.0, 2.0) == 1.0

    def test_scheme_two_closed_form(self):
        x = np.full(20, np.sqrt(2.0))
        assert update_variance_scheme_two(np.ones(20), x, 0.0, 2.0) == pytest.approx(1.6666667, abs=1e-7)

    @pytest.mark.parametrize("log_scheme", [False, True])
    def test_against_oracle(self, log_scheme):
        rng = np.random.default_rng(5)
        update = update_variance_scheme_two if log_scheme else update_variance_scheme_one
        for _ in range(40):
            tau = rng.uniform(0.1, 1, 15)
            x = rng.normal(0, rng.uniform(0.3, 2.5), 15)
            lam = rng.uniform(0, 6)
            s = update(tau, x, 0.1, lam)
            _, best = scalar_var_oracle(tau, x, 0.1, lam, log_scheme)
            r2 = float(tau @ (x - 0.1) ** 2)
            pen = abs(np.log(s)) if log_scheme else abs(s - 1)
            got = -0.5 * tau.sum() * np.log(s) - r2 / (2 * s) - lam * pen
            assert got >= best - 1e-9


class TestAdaptiveWeights:
    def test_reciprocals(self):
        p = MixtureParams(np.array([1.0]), np.array([[0.5]]), np.array([[3.0]]))
        w, v = adaptive_weights(p)
        assert w[0, 0] == pytest.approx(2.0)
        assert v[0, 0] == pytest.approx(0.5)

    def test_exact_null_gives_infinity(self):
        p = MixtureParams(np.array([1.0]), np.array([[0.0]]), np.array([[1.0]]))
        w, v = adaptive_weights(p)
        assert np.isinf(w[0, 0]) and np.isinf(v[0, 0])

    def test_exponent_zero(self):
        p = MixtureParams(np.array([1.0]), np.array([[0.0]]), np.array([[1.0]]))
        w, v = adaptive_weights(p, exponent=0.0)
        assert w[0, 0] == 1.0 and v[0, 0] == 1.0

    def test_negative_exponent(self):
        p = MixtureParams(np.array([1.0]), np.array([[0.5]]), np.array([[3.0]]))
        with pytest.raises(ConfigError):
            adaptive_weights(p, exponent=-1.0)


class TestFit:
    def test_single_component_mle(self):
        data = standardize(np.random.default_rng(0).normal(size=(50, 4)))
        init = MixtureParams(np.array([1.0]), np.full((1, 4), 0.3), np.full((1, 4), 2.0))
        fit = em_fit(data, 1, PenaltyConfig(), init=init)
        np.testing.assert_allclose(fit.params.mu, 0.0, atol=1e-8)
        np.testing.assert_allclose(fit.params.sigma2, 1.0, atol=1e-8)

    def test_huge_penalty_gives_null_model(self):
        data = standardize(np.random.default_rng(1).normal(size=(60, 3)))
        init = kmeans_init(data, 2, seed=3)
        fit = em_fit(data, 2, PenaltyConfig(1e12, 1e12), init=init)
        assert np.all(fit.params.mu == 0.0)
        assert np.all(fit.params.sigma2 == 1.0)
        np.testing.assert_allclose(fit.tau, np.broadcast_to(fit.params.pi, fit.tau.shape), atol=1e-14)

    def test_separated_clusters_match_plain_em(self):
        rng = np.random.default_rng(2)
        x = np.concatenate([rng.normal(-5, 1, 100), rng.normal(5, 1, 100)])[:, None]
        data = standardize(x)
        init = kmeans_init(data, 2, seed=0)
        fit = em_fit(data, 2, PenaltyConfig(), init=init, stop=StopRule(tol=1e-12, max_iter=1000))
        means = np.sort(fit.params.mu[:, 0]) * data.column_sds[0] + data.column_means[0]
        np.testing.assert_allclose(means, [-5, 5], atol=0.2)
        ref = plain_em(data.values, init.pi, init.mu, init.sigma2, fit.iterations)
        assert fit.loglik == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("mode", [CovMode.EQUAL, CovMode.UNEQUAL])
    @pytest.mark.parametrize("scheme", [Scheme.VAR_MINUS_ONE, Scheme.LOG_VAR])
    def test_trace_is_monotone(self, mode, scheme):
        rng = np.random.default_rng(7)
        x = np.vstack([rng.normal(0, 1, (30, 6)), rng.normal(1.5, 1.5, (20, 6))])
        data = standardize(x)
        lam2 = 0.0 if mode is CovMode.EQUAL else 2.0
        fit = em_fit(data, 2, PenaltyConfig(1.0, lam2, scheme), mode, init=kmeans_init(data, 2, 1, mode))
        assert penalized_trace_drops(fit) <= 1e-8
        assert fit.status in (FitStatus.CONVERGED, FitStatus.MAX_ITERATIONS)

    def test_infinite_weights_pin_parameters(self):
        data = standardize(np.random.default_rng(4).normal(size=(40, 2)))
        w = np.array([[np.inf, 1.0], [np.inf, 1.0]])
        v = np.array([[np.inf, 1.0], [np.inf, 1.0]])
        fit = em_fit(data, 2, PenaltyConfig(0.5, 0.5, mean_weights=w, var_weights=v), init=kmeans_init(data, 2, 0))
        assert np.all(fit.params.mu[:, 0] == 0.0)
        assert np.all(fit.params.sigma2[:, 0] == 1.0)

    def test_equal_mode_rejects_variance_penalty(self):
        data = standardize(np.random.default_rng(4).normal(size=(10, 2)))
        with pytest.raises(ConfigError):
            em_fit(data, 2, PenaltyConfig(1.0, 1.0), CovMode.EQUAL, init=kmeans_init(data, 2, 0, CovMode.EQUAL))

    def test_requires_init(self):
        data = standardize(np.random.default_rng(4).normal(size=(10, 2)))
        with pytest.raises(ConfigError):
            em_fit(data, 1, PenaltyConfig())

    def test_stop_rule_validation(self):
        with pytest.raises(ConfigError):
            StopRule(tol=0.0)
        with pytest.raises(ConfigError):
            StopRule(max_iter=0)

    def test_iteration_cap(self):
        data = standardize(np.random.default_rng(5).normal(size=(30, 3)))
        fit = em_fit(data, 2, PenaltyConfig(), init=kmeans_init(data, 2, 0), stop=StopRule(1e-300, 3))
        assert fit.iterations == 3
        assert fit.status is FitStatus.MAX_ITERATIONS
        assert fit.trace.size == 4
