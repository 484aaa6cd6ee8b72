"""Domain types, Gaussian log-densities and the penalized log-likelihood.

All mixtures here have diagonal covariances.  Parameters are stored as
``g x K`` arrays: row ``i`` is component ``i``.  In equal-covariance mode
every row of ``sigma2`` holds the same common variance vector.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from penclust._core import kernels
from penclust.errors import ConfigError, ConstantColumn, InfiniteWeightConflict, InvalidValue

VARIANCE_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


class CovMode(str, enum.Enum):
    EQUAL = "equal"
    UNEQUAL = "unequal"


class Scheme(str, enum.Enum):
    """How cluster variances are shrunk towards one."""

    VAR_MINUS_ONE = "var1"  # lambda2 * |sigma2 - 1|
    LOG_VAR = "logvar"  # lambda2 * |log sigma2|


class FitStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    DEGENERATE_CLUSTER = "degenerate_cluster"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An ``n x K`` data matrix plus the moments used to standardize it."""

    values: np.ndarray
    standardized: bool
    column_means: np.ndarray
    column_sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "column_means", _frozen(self.column_means))
        object.__setattr__(self, "column_sds", _frozen(self.column_sds))
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if np.any(self.column_sds <= 0):
            raise ConstantColumn(int(np.argmax(self.column_sds <= 0)))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]


def standardize(raw) -> Dataset:
    """Center each column and scale it to unit variance (denominator ``n``).

    Raises
    ------
    InvalidValue
        If ``raw`` contains NaN or infinite entries, or has fewer than 2 rows.
    ConstantColumn
        If some column has zero variance.
    """
    x = np.array(raw, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidValue("need a 2-D matrix with at least two observations")
    if not np.all(np.isfinite(x)):
        raise InvalidValue("data contain NaN or infinite values")
    means = x.mean(axis=0)
    sds = np.sqrt(((x - means) ** 2).mean(axis=0))
    const = np.flatnonzero(sds == 0)
    if const.size:
        raise ConstantColumn(int(const[0]))
    return Dataset((x - means) / sds, True, means, sds)


@dataclass(frozen=True)
class Grouping:
    """A partition of the ``K`` variables into ``M`` groups with ids ``1..M``."""

    group_of: np.ndarray
    group_means: bool = True
    group_variances: bool = False

    def __post_init__(self):
        ids = np.asarray(self.group_of)
        if ids.ndim != 1 or ids.size == 0:
            raise ConfigError("group_of must be a non-empty vector")
        if not np.issubdtype(ids.dtype, np.integer):
            if not np.all(ids == np.round(ids)):
                raise ConfigError("group ids must be integers")
        ids = ids.astype(np.int64)
        M = int(ids.max())
        if ids.min() < 1 or np.bincount(ids, minlength=M + 1)[1:].min() == 0:
            raise ConfigError("group ids must cover 1..M with no empty group")
        ids.setflags(write=False)
        object.__setattr__(self, "group_of", ids)

    @property
    def M(self) -> int:
        return int(self.group_of.max())

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.M + 1)[1:]

    @property
    def blocks(self) -> list[np.ndarray]:
        """Variable indices (0-based, ascending) of each group, in id order."""
        order, starts = self.layout
        return np.split(order, starts[1:-1])

    @functools.cached_property
    def layout(self) -> tuple[np.ndarray, np.ndarray]:
        """``(order, starts)``: group ``m`` is ``order[starts[m]:starts[m + 1]]``."""
        order = np.argsort(self.group_of, kind="stable").astype(np.int64)
        starts = np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)
        return order, starts

    def block_norms(self, mat: np.ndarray) -> np.ndarray:
        """Euclidean norm of every row of ``mat`` over every group, ``rows x M``."""
        order, starts = self.layout
        return np.sqrt(np.add.reduceat(np.asarray(mat)[:, order] ** 2, starts[:-1], axis=1))


@dataclass(frozen=True)
class MixtureParams:
    pi: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    cov_mode: CovMode = CovMode.UNEQUAL

    def __post_init__(self):
        pi, mu, s2 = _frozen(self.pi), _frozen(self.mu), _frozen(self.sigma2)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", s2)
        object.__setattr__(self, "cov_mode", CovMode(self.cov_mode))
        if pi.ndim != 1 or mu.ndim != 2 or mu.shape != s2.shape or mu.shape[0] != pi.size:
            raise ConfigError("inconsistent parameter shapes")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ConfigError("mixing proportions must be a probability vector")
        if np.any(~(s2 >= VARIANCE_FLOOR)):
            raise ConfigError("variances must be at least the variance floor")
        if self.cov_mode is CovMode.EQUAL and np.any(s2 != s2[0]):
            raise ConfigError("equal-covariance mode requires identical variance rows")

    @property
    def g(self) -> int:
        return self.pi.size

    @property
    def K(self) -> int:
        return self.mu.shape[1]


@dataclass(frozen=True)
class PenaltyConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    scheme: Scheme = Scheme.VAR_MINUS_ONE
    mean_weights: np.ndarray | None = None
    var_weights: np.ndarray | None = None
    grouping: Grouping | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ConfigError("penalty strengths must be non-negative")
        for name in ("mean_weights", "var_weights"):
            w = getattr(self, name)
            if w is None:
                continue
            w = _frozen(w)
            if w.ndim != 2 or np.any(np.isnan(w)) or np.any(w < 0):
                raise ConfigError(f"{name} must be a non-negative g x K matrix")
            object.__setattr__(self, name, w)
        if self.grouping is not None and (self.mean_weights is not None or self.var_weights is not None):
            raise ConfigError("adaptive weights cannot be combined with grouping")
        if (
            self.grouping is not None
            and self.grouping.group_variances
            and self.scheme is Scheme.LOG_VAR
        ):
            raise ConfigError("grouped variances are only defined for the var1 scheme")

    def with_lambdas(self, lambda1: float, lambda2: float) -> PenaltyConfig:
        return PenaltyConfig(
            lambda1, lambda2, self.scheme, self.mean_weights, self.var_weights, self.grouping
        )

    def effective(self, g: int, K: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-parameter penalty strengths ``lambda * weight`` as ``g x K`` arrays.

        A zero lambda disables the penalty even where a weight is infinite.
        """
        return (
            _scaled(self.lambda1, self.mean_weights, g, K),
            _scaled(self.lambda2, self.var_weights, g, K),
        )


def _scaled(lam: float, w: np.ndarray | None, g: int, K: int) -> np.ndarray:
    if w is None:
        return np.full((g, K), float(lam))
    if w.shape != (g, K):
        raise ConfigError(f"weight matrix has shape {w.shape}, expected {(g, K)}")
    if lam == 0:
        return np.zeros((g, K))
    return lam * w


def log_component_density(x, mu_i, sigma2_i) -> float:
    """Log of a diagonal-covariance normal density at a single point."""
    x, mu_i, s = (np.asarray(a, dtype=np.float64) for a in (x, mu_i, sigma2_i))
    if np.any(s <= 0):
        raise ValueError("variances must be positive")
    return float(-0.5 * (x.size * LOG_2PI + np.log(s).sum() + ((x - mu_i) ** 2 / s).sum()))


def log_density_matrix(X, params: MixtureParams) -> np.ndarray:
    """``n x g`` matrix of ``log f_i(x_j)``."""
    return kernels.log_densities(
        np.ascontiguousarray(X, dtype=np.float64), params.mu, params.sigma2
    )


def _weighted_abs(lam: np.ndarray, dev: np.ndarray, what: str) -> float:
    pinned = np.isinf(lam)
    if np.any(dev[pinned] != 0):
        raise InfiniteWeightConflict(f"infinite weight on a {what} away from its null value")
    return float((lam[~pinned] * np.abs(dev[~pinned])).sum())


def penalty_value(params: MixtureParams, penalty: PenaltyConfig) -> float:
    """The active penalty at ``params`` (means, variances, grouped blocks).

    In equal-covariance mode only the means are penalized.
    """
    g, K = params.g, params.K
    lam1, lam2 = penalty.effective(g, K)
    grouping = penalty.grouping
    mu, s2 = params.mu, params.sigma2
    vdev = np.log(s2) if penalty.scheme is Scheme.LOG_VAR else s2 - 1.0
    penalize_var = params.cov_mode is CovMode.UNEQUAL
    total = 0.0

    if grouping is None or not grouping.group_means:
        total += _weighted_abs(lam1, mu, "mean")
    if penalize_var and (grouping is None or not grouping.group_variances):
        total += _weighted_abs(lam2, vdev, "variance")
    if grouping is not None:
        root_k = np.sqrt(grouping.sizes)
        if grouping.group_means and penalty.lambda1 > 0:
            total += penalty.lambda1 * float((grouping.block_norms(mu) * root_k).sum())
        if penalize_var and grouping.group_variances and penalty.lambda2 > 0:
            total += penalty.lambda2 * float((grouping.block_norms(vdev) * root_k).sum())
    return float(total)


def _log_pi(pi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(pi)


def loglik(data: Dataset, params: MixtureParams) -> float:
    """Unpenalized mixture log-likelihood; zero-weight components drop out."""
    _, ll = kernels.e_step(data.values, _log_pi(params.pi), params.mu, params.sigma2)
    return float(ll)


def penalized_loglik(data: Dataset, params: MixtureParams, penalty: PenaltyConfig) -> float:
    return loglik(data, params) - penalty_value(params, penalty)


def noise_variables(params: MixtureParams) -> np.ndarray:
    """Variables that cannot influence cluster membership.

    Unequal mode: every cluster mean exactly 0 and every variance exactly 1.
    Equal mode: every cluster mean exactly 0 (the shared variance cancels).
    """
    null = params.mu == 0
    if params.cov_mode is CovMode.UNEQUAL:
        null &= params.sigma2 == 1
    return np.flatnonzero(null.all(axis=0))


@dataclass(frozen=True)
class FitResult:
    params: MixtureParams
    tau: np.ndarray
    penalized_loglik: float
    loglik: float
    trace: np.ndarray
    iterations: int
    status: FitStatus
    floor_hits: int = 0
    inner_nonconverged: int = 0
    noise_variable_indices: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "trace", _frozen(self.trace))
        object.__setattr__(self, "tau", _frozen(self.tau))
        object.__setattr__(self, "status", FitStatus(self.status))
        idx = noise_variables(self.params)
        idx.setflags(write=False)
        object.__setattr__(self, "noise_variable_indices", idx)

    @property
    def zero_mean_count(self) -> int:
        return int(np.count_nonzero(self.params.mu == 0))

    @property
    def unit_variance_count(self) -> int:
        return int(np.count_nonzero(self.params.sigma2 == 1))

    @property
    def labels(self) -> np.ndarray:
        """Hard assignments (argmax responsibility), 0-based."""
        return np.argmax(self.tau, axis=1)
