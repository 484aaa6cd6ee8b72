from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import group_mean_objective, group_mean_oracle, group_var_objective, group_var_oracle
from penclust.em import update_mean, update_variance_scheme_one
from penclust.errors import EmptyCluster
from penclust.grouped import (
    GroupBlockInput,
    check_group_variance_at_one,
    group_variance_objective,
    update_group_mean,
    update_group_variance,
)


def _block(T, sx=None, sq=None, s2=None, k=None):
    k = k or len(sx if sx is not None else sq)
    return GroupBlockInput(
        T,
        np.zeros(k) if sx is None else np.asarray(sx, float),
        np.ones(k) if sq is None else np.asarray(sq, float),
        np.ones(k) if s2 is None else np.asarray(s2, float),
    )


class TestGroupMean:
    def test_threshold_gives_zero(self):
        blk = _block(4.0, sx=[1.0, 1.0])
        np.testing.assert_array_equal(update_group_mean(blk, 1.0), [0.0, 0.0])

    def test_kkt_value(self):
        blk = _block(4.0, sx=[10.0, 0.0])
        np.testing.assert_allclose(update_group_mean(blk, 2.0), [1.7928932, 0.0], atol=1e-7)
        assert update_group_mean(blk, 2.0)[0] == pytest.approx(2.5 - math.sqrt(2) / 2, abs=1e-12)

    def test_stationarity_residual(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(2, 6))
            T = rng.uniform(2, 20)
            sx = rng.normal(0, 8, k)
            s2 = rng.uniform(0.3, 3, k)
            lam = rng.uniform(0, 3)
            mu = update_group_mean(_block(T, sx=sx, s2=s2), lam)
            if np.any(mu != 0):
                L = lam * math.sqrt(k)
                res = (sx - T * mu) / s2 - L * mu / np.linalg.norm(mu)
                assert np.max(np.abs(res)) < 1e-6
            else:
                assert np.linalg.norm(sx / s2) <= lam * math.sqrt(k) + 1e-12

    def test_against_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            k = 3
            T, sx, s2 = rng.uniform(2, 20), rng.normal(0, 6, k), rng.uniform(0.3, 3, k)
            L = rng.uniform(0, 3) * math.sqrt(k)
            mu = update_group_mean(_block(T, sx=sx, s2=s2), L / math.sqrt(k))
            _, best = group_mean_oracle(T, sx, s2, L, rng)
            assert group_mean_objective(T, sx, s2, L, mu) >= best - 1e-9

    def test_size_one_matches_scalar_update(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            tau = rng.uniform(0, 1, 8)
            x = rng.normal(0, 2, 8)
            s2, lam = rng.uniform(0.2, 3), rng.uniform(0, 4)
            blk = _block(tau.sum(), sx=[tau @ x], s2=[s2])
            assert update_group_mean(blk, lam)[0] == pytest.approx(update_mean(tau, x, s2, lam), abs=1e-8)

    def test_empty(self):
        with pytest.raises(EmptyCluster):
            update_group_mean(_block(0.0, sx=[1.0]), 1.0)


class TestGroupVarianceCheck:
    def test_huge_lambda(self):
        assert check_group_variance_at_one(_block(10.0, sq=[40.0, 2.0]), 1e9)

    def test_zero_gradient(self):
        assert check_group_variance_at_one(_block(20.0, sq=[20.0, 20.0]), 0.0)

    def test_norm_exceeds_threshold(self):
        assert not check_group_variance_at_one(_block(20.0, sq=[40.0, 24.0]), 2.0)


class TestGroupVariance:
    def test_threshold_gives_ones(self):
        blk = _block(20.0, sq=[22.0, 18.0])
        np.testing.assert_array_equal(update_group_variance(blk, 5.0), [1.0, 1.0])

    def test_zero_lambda_gives_mle(self):
        blk = _block(20.0, sq=[40.0, 8.0])
        np.testing.assert_allclose(update_group_variance(blk, 0.0), [2.0, 0.4])

    def test_two_coordinate_oracle(self):
        blk = _block(20.0, sq=[40.0, 60.0])
        s = update_group_variance(blk, 2.0)
        _, best = group_var_oracle(10.0, np.array([20.0, 30.0]), 2.0 * math.sqrt(2), np.random.default_rng(0))
        assert group_variance_objective(blk, 2.0, s) >= best - 1e-4
        assert group_variance_objective(blk, 2.0, s) == pytest.approx(
            group_var_objective(10.0, np.array([20.0, 30.0]), 2 * math.sqrt(2), s)
        )

    def test_coordinates_between_one_and_mle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            b = rng.uniform(2, 30)
            c = b * rng.uniform(0.2, 3, k)
            lam = rng.uniform(0.1, 4)
            s = update_group_variance(_block(2 * b, sq=2 * c), lam, np.ones(k))
            lo, hi = np.minimum(1, c / b), np.maximum(1, c / b)
            assert np.all(s >= lo - 1e-12) and np.all(s <= hi + 1e-12)

    def test_never_worse_than_start(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            b = rng.uniform(2, 30)
            c = b * rng.uniform(0.2, 3, k)
            lam = rng.uniform(0.1, 4)
            start = rng.uniform(0.3, 3, k)
            blk = _block(2 * b, sq=2 * c, s2=start)
            s = update_group_variance(blk, lam)
            assert group_variance_objective(blk, lam, s) >= group_variance_objective(blk, lam, start) - 1e-8

    def test_size_one_matches_scalar_update(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            tau = rng.uniform(0, 1, 10)
            x = rng.normal(0, rng.uniform(0.3, 2), 10)
            lam = rng.uniform(0.01, 4)
            sq = float(tau @ x**2)
            got = update_group_variance(_block(tau.sum(), sq=[sq]), lam, np.ones(1))[0]
            assert got == pytest.approx(update_variance_scheme_one(tau, x, 0.0, lam), abs=1e-8)

    def test_empty(self):
        with pytest.raises(EmptyCluster):
            update_group_variance(_block(0.0, sq=[1.0]), 1.0)


def test_block_input_validation():
    with pytest.raises(ValueError):
        GroupBlockInput(1.0, np.zeros(2), np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        GroupBlockInput(1.0, np.zeros(1), np.ones(1), np.zeros(1))
