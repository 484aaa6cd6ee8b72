from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from penclust.errors import ConfigError, ConstantColumn, InfiniteWeightConflict, InvalidValue
from penclust.model import (
    CovMode,
    Grouping,
    MixtureParams,
    PenaltyConfig,
    Scheme,
    log_component_density,
    loglik,
    noise_variables,
    penalized_loglik,
    penalty_value,
    standardize,
)


def _params(mu, s2, pi=None, mode=CovMode.UNEQUAL):
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    s2 = np.atleast_2d(np.asarray(s2, dtype=float))
    pi = np.full(mu.shape[0], 1.0 / mu.shape[0]) if pi is None else np.asarray(pi, dtype=float)
    return MixtureParams(pi, mu, s2, mode)


class TestStandardize:
    def test_three_values(self):
        d = standardize(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(d.values[:, 0], [-1.2247449, 0.0, 1.2247449], atol=1e-7)
        assert d.column_means[0] == 2.0
        assert d.column_sds[0] == pytest.approx(math.sqrt(2 / 3))

    def test_output_has_zero_mean_unit_variance(self):
        x = np.random.default_rng(0).normal(3, 5, (50, 4))
        d = standardize(x)
        np.testing.assert_allclose(d.values.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(d.values.var(axis=0), 1, atol=1e-12)

    def test_already_standard_is_unchanged(self):
        x = standardize(np.random.default_rng(1).normal(size=(30, 3))).values
        np.testing.assert_allclose(standardize(x).values, x, atol=1e-12)

    def test_constant_column(self):
        with pytest.raises(ConstantColumn) as info:
            standardize(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
        assert info.value.column == 1

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite(self, bad):
        with pytest.raises(InvalidValue):
            standardize(np.array([[1.0], [bad], [3.0]]))

    def test_values_are_read_only_and_contiguous(self):
        d = standardize(np.asfortranarray(np.random.default_rng(2).normal(size=(5, 3))))
        assert not d.values.flags.writeable
        assert d.values.flags.c_contiguous


class TestDensity:
    def test_standard_normal_at_mode(self):
        assert log_component_density([0.0], [0.0], [1.0]) == pytest.approx(-0.9189385, abs=1e-7)

    def test_additive_over_coordinates(self):
        assert log_component_density([0, 0], [0, 0], [1, 1]) == pytest.approx(-1.8378771, abs=1e-7)

    def test_against_scipy(self):
        assert log_component_density([2.0], [0.0], [4.0]) == pytest.approx(-2.1120857, abs=1e-7)
        assert log_component_density([2.0], [0.0], [4.0]) == pytest.approx(stats.norm(0, 2).logpdf(2.0))

    def test_rejects_non_positive_variance(self):
        with pytest.raises(ValueError):
            log_component_density([0.0], [0.0], [0.0])


class TestPenalty:
    def test_null_model_is_free(self):
        p = _params(np.zeros((2, 3)), np.ones((2, 3)))
        assert penalty_value(p, PenaltyConfig(3.0, 4.0)) == 0.0

    def test_scheme_one(self):
        p = _params([[1.0, -2.0]], [[1.0, 4.0]])
        assert penalty_value(p, PenaltyConfig(1.0, 1.0)) == pytest.approx(6.0)

    def test_scheme_two(self):
        p = _params([[1.0, -2.0]], [[1.0, 4.0]])
        assert penalty_value(p, PenaltyConfig(1.0, 1.0, Scheme.LOG_VAR)) == pytest.approx(4.3862944, abs=1e-7)

    def test_equal_mode_ignores_variances(self):
        p = _params([[1.0, -2.0], [0.0, 0.5]], [[2.0, 4.0], [2.0, 4.0]], mode=CovMode.EQUAL)
        assert penalty_value(p, PenaltyConfig(1.0, 5.0)) == pytest.approx(3.5)

    def test_grouped_means(self):
        grp = Grouping(np.array([1, 1, 2]), group_means=True)
        p = _params([[3.0, 4.0, -1.0]], [[1.0, 1.0, 1.0]])
        # sqrt(2) * ||(3, 4)|| + sqrt(1) * ||(-1)||
        assert penalty_value(p, PenaltyConfig(2.0, 0.0, grouping=grp)) == pytest.approx(2 * (5 * math.sqrt(2) + 1))

    def test_grouped_variances(self):
        grp = Grouping(np.array([1, 1, 2]), group_means=False, group_variances=True)
        p = _params([[1.0, 0.0, 0.0]], [[2.0, 3.0, 0.5]])
        expect = 1.0 * 1.0 + 1.5 * (math.sqrt(2) * math.sqrt(5) + 0.5)
        assert penalty_value(p, PenaltyConfig(1.0, 1.5, grouping=grp)) == pytest.approx(expect)

    def test_adaptive_weights_scale_terms(self):
        p = _params([[1.0, -2.0]], [[1.0, 4.0]])
        w = np.array([[2.0, 0.5]])
        v = np.array([[1.0, 3.0]])
        assert penalty_value(p, PenaltyConfig(1.0, 1.0, mean_weights=w, var_weights=v)) == pytest.approx(2 + 1 + 9)

    def test_infinite_weight_on_nonnull_parameter(self):
        p = _params([[1.0]], [[1.0]])
        with pytest.raises(InfiniteWeightConflict):
            penalty_value(p, PenaltyConfig(1.0, 0.0, mean_weights=np.array([[np.inf]])))

    def test_infinite_weight_on_null_parameter_is_free(self):
        p = _params([[0.0]], [[1.0]])
        assert penalty_value(p, PenaltyConfig(1.0, 1.0, mean_weights=np.array([[np.inf]]))) == 0.0

    def test_zero_lambda_with_infinite_weight(self):
        cfg = PenaltyConfig(0.0, 0.0, mean_weights=np.array([[np.inf]]))
        lam1, _ = cfg.effective(1, 1)
        assert lam1[0, 0] == 0.0


class TestLoglik:
    def test_two_identical_components_collapse(self):
        data = standardize(np.array([[-1.0], [1.0]]))
        p = _params([[0.0], [0.0]], [[1.0], [1.0]])
        expect = stats.norm.logpdf(data.values).sum()
        assert loglik(data, p) == pytest.approx(expect)

    def test_spec_example(self):
        # data (0, 1) used raw: build a Dataset by hand to skip standardization
        from penclust.model import Dataset

        data = Dataset(np.array([[0.0], [1.0]]), False, np.zeros(1), np.ones(1))
        p = _params([[0.0], [0.0]], [[1.0], [1.0]])
        assert penalized_loglik(data, p, PenaltyConfig()) == pytest.approx(-2.3378771, abs=1e-7)

    def test_penalized_is_loglik_minus_penalty(self):
        data = standardize(np.random.default_rng(3).normal(size=(20, 2)))
        p = _params([[0.5, 0.0], [-0.5, 0.2]], [[1.0, 2.0], [0.5, 1.0]])
        pen = PenaltyConfig(1.0, 2.0)
        assert penalized_loglik(data, p, pen) == pytest.approx(loglik(data, p) - penalty_value(p, pen))


class TestParams:
    def test_pi_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            MixtureParams(np.array([0.5, 0.6]), np.zeros((2, 1)), np.ones((2, 1)))

    def test_shapes_must_agree(self):
        with pytest.raises(ConfigError):
            MixtureParams(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 3)))

    def test_variance_floor(self):
        with pytest.raises(ConfigError):
            MixtureParams(np.array([1.0]), np.zeros((1, 1)), np.full((1, 1), 1e-7))

    def test_equal_mode_needs_identical_rows(self):
        with pytest.raises(ConfigError):
            MixtureParams(np.array([0.5, 0.5]), np.zeros((2, 1)), np.array([[1.0], [2.0]]), CovMode.EQUAL)

    def test_arrays_are_frozen(self):
        p = _params([[1.0]], [[1.0]])
        with pytest.raises(ValueError):
            p.mu[0, 0] = 3.0


class TestNoiseVariables:
    def test_unequal_needs_zero_means_and_unit_variances(self):
        p = _params([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]], [[1.0, 2.0, 1.0], [1.0, 1.0, 1.0]])
        assert noise_variables(p).tolist() == [0]

    def test_equal_needs_zero_means_only(self):
        p = _params([[0.0, 1.0], [0.0, 0.0]], [[3.0, 1.0], [3.0, 1.0]], mode=CovMode.EQUAL)
        assert noise_variables(p).tolist() == [0]


class TestGrouping:
    def test_layout_and_blocks(self):
        grp = Grouping(np.array([2, 1, 2, 3]))
        assert grp.M == 3
        assert grp.sizes.tolist() == [1, 2, 1]
        assert [b.tolist() for b in grp.blocks] == [[1], [0, 2], [3]]

    def test_block_norms(self):
        grp = Grouping(np.array([1, 1, 2]))
        np.testing.assert_allclose(grp.block_norms(np.array([[3.0, 4.0, -2.0]])), [[5.0, 2.0]])

    @pytest.mark.parametrize("ids", [[0, 1], [1, 3], [1.5, 1]])
    def test_invalid_ids(self, ids):
        with pytest.raises(ConfigError):
            Grouping(np.array(ids))

    def test_log_scheme_rejects_grouped_variances(self):
        grp = Grouping(np.array([1, 1]), group_variances=True)
        with pytest.raises(ConfigError):
            PenaltyConfig(1.0, 1.0, Scheme.LOG_VAR, grouping=grp)

    def test_adaptive_weights_reject_grouping(self):
        with pytest.raises(ConfigError):
            PenaltyConfig(1.0, 1.0, mean_weights=np.ones((1, 2)), grouping=Grouping(np.array([1, 1])))

    def test_negative_lambda(self):
        with pytest.raises(ConfigError):
            PenaltyConfig(-1.0, 0.0)
