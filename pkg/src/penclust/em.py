"""EM / GEM fitting of penalized diagonal Gaussian mixtures.

Each iteration runs one E-step and one M-step pass in the order
proportions, means (using the previous variances), variances (using the
new means).  Every coordinate update maximizes its own penalized
expected complete-data log-likelihood, so the penalized log-likelihood
never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from penclust._core import kernels
from penclust.errors import ConfigError, EmptyCluster
from penclust.model import (
    VARIANCE_FLOOR,
    CovMode,
    Dataset,
    FitResult,
    FitStatus,
    MixtureParams,
    PenaltyConfig,
    Scheme,
    _log_pi,
    penalty_value,
)

EMPTY_TOL = 1e-8


@dataclass(frozen=True)
class StopRule:
    """Stop when ``|dL| / (|L| + 1) < tol`` or after ``max_iter`` M-steps."""

    tol: float = 1e-6
    max_iter: int = 500

    def __post_init__(self):
        if not self.tol > 0 or int(self.max_iter) < 1:
            raise ConfigError("StopRule needs tol > 0 and max_iter >= 1")


@dataclass(frozen=True)
class SuffStats:
    tau_sums: np.ndarray
    weighted_x: np.ndarray
    weighted_sq: np.ndarray


def suff_stats(data: Dataset, tau: np.ndarray, mu: np.ndarray) -> SuffStats:
    X = data.values
    tau = np.ascontiguousarray(tau, dtype=np.float64)
    return SuffStats(
        tau.sum(axis=0), tau.T @ X, kernels.centered_sq(X, tau, np.ascontiguousarray(mu))
    )


# --- single-coordinate updates ---------------------------------------------


def e_step(data: Dataset, params: MixtureParams) -> np.ndarray:
    tau, _ = kernels.e_step(data.values, _log_pi(params.pi), params.mu, params.sigma2)
    return tau


def update_pi(tau: np.ndarray) -> np.ndarray:
    tau = np.asarray(tau, dtype=np.float64)
    return tau.sum(axis=0) / tau.shape[0]


def _mass(tau_i) -> float:
    t = float(np.sum(tau_i))
    if not t > EMPTY_TOL:
        raise EmptyCluster(f"component mass {t!r} is numerically zero")
    return t


def _soft_mean(sx, tau_sum, sigma2, lam):
    """Vectorized thresholded mean: zero when ``|sx| / sigma2 <= lam``."""
    with np.errstate(invalid="ignore"):
        keep = np.abs(sx) > lam * sigma2
        shrunk = (sx - np.sign(sx) * lam * sigma2) / tau_sum
    return np.where(keep, shrunk, 0.0)


def update_mean(tau_i, x_col, sigma2_ik: float, lambda1_eff: float) -> float:
    """Penalized mean of one variable in one component (soft threshold)."""
    tau_i = np.asarray(tau_i, dtype=np.float64)
    t = _mass(tau_i)
    sx = float(tau_i @ np.asarray(x_col, dtype=np.float64))
    return float(_soft_mean(sx, t, sigma2_ik, lambda1_eff))


def update_common_variance(tau, data: Dataset, mu) -> np.ndarray:
    """Pooled variance per variable, summed over components, floored."""
    tau = np.ascontiguousarray(tau, dtype=np.float64)
    sq = kernels.centered_sq(data.values, tau, np.ascontiguousarray(mu, dtype=np.float64))
    return np.maximum(sq.sum(axis=0) / data.n, VARIANCE_FLOOR)


def _bc(tau_i, x_col, mu_ik):
    tau_i = np.asarray(tau_i, dtype=np.float64)
    t = _mass(tau_i)
    r = np.asarray(x_col, dtype=np.float64) - mu_ik
    return t / 2.0, float(tau_i @ (r * r)) / 2.0


def update_variance_scheme_one(tau_i, x_col, mu_ik: float, lambda2_eff: float) -> float:
    """Maximizer of ``-b log s - c/s - lambda2 |s - 1|``, floored."""
    b, c = _bc(tau_i, x_col, mu_ik)
    s, _ = kernels.var_update_one(np.array([b]), np.array([c]), np.array([float(lambda2_eff)]))
    return float(s[0])


def update_variance_scheme_two(tau_i, x_col, mu_ik: float, lambda2_eff: float) -> float:
    """Maximizer of ``-b log s - c/s - lambda2 |log s|``, floored."""
    b, c = _bc(tau_i, x_col, mu_ik)
    s, _ = kernels.var_update_two(np.array([b]), np.array([c]), np.array([float(lambda2_eff)]))
    return float(s[0])


def adaptive_weights(mple: MixtureParams, exponent: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Reciprocal-magnitude weights ``1/|mu|^e`` and ``1/|sigma2 - 1|^e``.

    Exact nulls get infinite weight, except with ``exponent == 0``
    where every weight is 1.
    """
    if exponent < 0:
        raise ConfigError("exponent must be non-negative")
    if exponent == 0:
        ones = np.ones_like(mple.mu)
        return ones, ones.copy()
    with np.errstate(divide="ignore"):
        w = 1.0 / np.abs(mple.mu) ** exponent
        v = 1.0 / np.abs(mple.sigma2 - 1.0) ** exponent
    return w, v


# --- full fit ---------------------------------------------------------------


class _BlockPlan:
    """Grouped blocks with more than one variable, laid out for the batch kernels.

    Singleton groups take the scalar updates, which coincide with the block
    solvers at ``k_m = 1``.
    """

    def __init__(self, grouping, lam: float):
        order, starts = grouping.layout
        sizes = np.diff(starts)
        keep = np.flatnonzero(sizes > 1)
        pieces = [order[starts[m]:starts[m + 1]] for m in keep]
        self.order = np.concatenate(pieces).astype(np.int64) if pieces else np.zeros(0, np.int64)
        self.starts = np.concatenate([[0], np.cumsum(sizes[keep])]).astype(np.int64)
        self.L = lam * np.sqrt(sizes[keep].astype(np.float64))
        self.empty = keep.size == 0


def _validate(data, g, penalty, cov_mode, init):
    if init.g != g or init.K != data.K:
        raise ConfigError(f"init has shape (g={init.g}, K={init.K}); expected (g={g}, K={data.K})")
    grp = penalty.grouping
    if grp is not None and grp.group_of.size != data.K:
        raise ConfigError("grouping length differs from the number of variables")
    if cov_mode is CovMode.EQUAL:
        if penalty.lambda2 > 0:
            raise ConfigError("equal-covariance fits do not penalize variances; set lambda2 = 0")
        if grp is not None and grp.group_variances:
            raise ConfigError("grouped variances need the unequal-covariance model")


def _start(init: MixtureParams, cov_mode: CovMode, lam1, lam2):
    mu = np.array(init.mu)
    s2 = np.array(init.sigma2)
    if cov_mode is CovMode.EQUAL:
        s2[:] = init.pi @ s2
    else:
        s2[np.isinf(lam2)] = 1.0
    mu[np.isinf(lam1)] = 0.0
    return np.array(init.pi), mu, np.maximum(s2, VARIANCE_FLOOR)


def em_fit(
    data: Dataset,
    g: int,
    penalty: PenaltyConfig,
    cov_mode: CovMode | str = CovMode.UNEQUAL,
    init: MixtureParams | None = None,
    stop: StopRule = StopRule(),
) -> FitResult:
    """Fit a penalized mixture by EM starting from ``init``.

    Infinite adaptive weights pin their parameters at the null value from
    the first iteration.  In equal-covariance mode the start uses the
    ``pi``-weighted average of the initial variance rows.

    A component whose total responsibility drops to 1e-8 or below stops
    the fit with status ``DEGENERATE_CLUSTER``; the last valid parameters
    are returned.
    """
    cov_mode = CovMode(cov_mode)
    if init is None:
        raise ConfigError("em_fit needs initial parameters")
    _validate(data, g, penalty, cov_mode, init)
    X = data.values
    n, K = X.shape
    lam1, lam2 = penalty.effective(g, K)
    grp = penalty.grouping
    mean_plan = _BlockPlan(grp, penalty.lambda1) if grp is not None and grp.group_means else None
    var_plan = (
        _BlockPlan(grp, penalty.lambda2)
        if grp is not None and grp.group_variances and cov_mode is CovMode.UNEQUAL
        else None
    )
    var_update = kernels.var_update_one if penalty.scheme is Scheme.VAR_MINUS_ONE else kernels.var_update_two

    pi, mu, s2 = _start(init, cov_mode, lam1, lam2)
    params = MixtureParams(pi, mu, s2, cov_mode)
    tau, ll = kernels.e_step(X, _log_pi(pi), params.mu, params.sigma2)
    lp = ll - penalty_value(params, penalty)
    trace = [lp]
    status = FitStatus.MAX_ITERATIONS
    floor_hits = inner_fail = 0
    it = 0

    while it < stop.max_iter:
        T = tau.sum(axis=0)
        if np.any(T <= EMPTY_TOL):
            status = FitStatus.DEGENERATE_CLUSTER
            break
        it += 1
        pi = T / n

        sx = tau.T @ X
        mu = _soft_mean(sx, T[:, None], s2, lam1)
        if mean_plan is not None and not mean_plan.empty:
            blk, bad = kernels.group_means_batch(
                np.ascontiguousarray(sx), T, s2, mean_plan.L, mean_plan.order, mean_plan.starts
            )
            mu[:, mean_plan.order] = blk[:, mean_plan.order]
            inner_fail += bad

        sq = kernels.centered_sq(X, tau, mu)
        if cov_mode is CovMode.EQUAL:
            common = sq.sum(axis=0) / n
            floor_hits += int(np.count_nonzero(common < VARIANCE_FLOOR))
            s2 = np.repeat(np.maximum(common, VARIANCE_FLOOR)[None, :], g, axis=0)
        else:
            b = T / 2.0
            c = sq / 2.0
            new, hits = var_update(np.broadcast_to(b[:, None], c.shape), c, lam2)
            floor_hits += hits
            if var_plan is not None and not var_plan.empty:
                blk, bad = kernels.group_variances_batch(
                    b, c, s2, var_plan.L, var_plan.order, var_plan.starts
                )
                cols = var_plan.order
                floor_hits += int(np.count_nonzero(blk[:, cols] == VARIANCE_FLOOR))
                new[:, cols] = blk[:, cols]
                inner_fail += bad
            s2 = np.ascontiguousarray(new)

        params = MixtureParams(pi / pi.sum(), mu, s2, cov_mode)
        tau, ll = kernels.e_step(X, _log_pi(params.pi), params.mu, params.sigma2)
        lp_new = ll - penalty_value(params, penalty)
        trace.append(lp_new)
        done = abs(lp_new - lp) / (abs(lp) + 1.0) < stop.tol
        lp = lp_new
        if done:
            status = FitStatus.CONVERGED
            break

    return FitResult(
        params=params,
        tau=tau,
        penalized_loglik=float(lp),
        loglik=float(ll),
        trace=np.array(trace),
        iterations=it,
        status=status,
        floor_hits=floor_hits,
        inner_nonconverged=inner_fail,
    )


def penalized_trace_drops(fit: FitResult) -> float:
    """Largest single-step decrease of the trace (0 when monotone)."""
    if fit.trace.size < 2:
        return 0.0
    return float(max(0.0, -np.diff(fit.trace).min()))


__all__ = [
    "StopRule",
    "SuffStats",
    "suff_stats",
    "e_step",
    "update_pi",
    "update_mean",
    "update_common_variance",
    "update_variance_scheme_one",
    "update_variance_scheme_two",
    "adaptive_weights",
    "em_fit",
    "penalized_trace_drops",
]
