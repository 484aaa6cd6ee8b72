"""K-means starts, the modified BIC and the joint (g, lambda1, lambda2) grid search."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from penclust.em import StopRule, adaptive_weights, em_fit
from penclust.errors import (
    AllStartsDegenerate,
    ConfigError,
    DegenerateFit,
    GlobalFailure,
    InitFailure,
)
from penclust.model import (
    VARIANCE_FLOOR,
    CovMode,
    Dataset,
    FitResult,
    FitStatus,
    MixtureParams,
    PenaltyConfig,
    Scheme,
)

DEFAULT_MULTIPLIERS = (0.0,) + tuple(2.0 ** (k / 2) for k in range(13))
KMEANS_MAX_ITER = 100
# smallest MAP cluster accepted from a start; tinier components are spurious variance spikes
MIN_CLUSTER_SIZE = 5


def default_lambda_grid(n: int) -> tuple[float, ...]:
    """Zero plus half-octave steps ``1, sqrt(2), 2, ..., 64``, all times ``sqrt(n) / 10``."""
    scale = math.sqrt(n) / 10.0
    return tuple(m * scale for m in DEFAULT_MULTIPLIERS)


def effective_df(params: MixtureParams, tol_zero: float = 0.0, corrected: bool = False) -> int:
    """Effective number of parameters used by the BIC.

    The default is ``g + K + gK - 1 - q``.  In the unequal model ``q`` counts
    pairs with ``mu_ik = 0`` and ``sigma2_ik = 1``; in the equal model the
    variances are shared and unpenalized, so ``q`` counts zero means.
    ``corrected=True`` instead counts the free parameters directly:
    ``g - 1`` proportions, nonzero means and non-unit variances (``K`` shared
    variances in the equal model).
    """
    g, K = params.g, params.K
    zero_mu = np.abs(params.mu) <= tol_zero
    unit_s2 = np.abs(params.sigma2 - 1.0) <= tol_zero
    if corrected:
        n_var = K if params.cov_mode is CovMode.EQUAL else int(np.count_nonzero(~unit_s2))
        return (g - 1) + int(np.count_nonzero(~zero_mu)) + n_var
    null = zero_mu if params.cov_mode is CovMode.EQUAL else zero_mu & unit_s2
    return g + K + g * K - 1 - int(np.count_nonzero(null))


def bic(fit: FitResult, n: int, tol_zero: float = 0.0, corrected: bool = False) -> float:
    """``-2 loglik + log(n) d_e`` at the penalized estimate."""
    if fit.status is FitStatus.DEGENERATE_CLUSTER:
        raise DegenerateFit("BIC is undefined for a fit with a degenerate cluster")
    return -2.0 * fit.loglik + math.log(n) * effective_df(fit.params, tol_zero, corrected)


def kmeans_init(
    data: Dataset, g: int, seed: int, cov_mode: CovMode | str = CovMode.UNEQUAL
) -> MixtureParams:
    """Seeded Lloyd's k-means turned into mixture starting values.

    Centers start at ``g`` distinct observations drawn uniformly.  A cluster
    that empties is reseeded once at the observation farthest from its
    current center; a second emptying raises :class:`InitFailure`.
    """
    cov_mode = CovMode(cov_mode)
    X = data.values
    n, K = X.shape
    if not 1 <= g <= n:
        raise ConfigError(f"need 1 <= g <= n, got g={g}, n={n}")
    rng = np.random.default_rng(seed)
    centers = X[np.sort(rng.choice(n, size=g, replace=False))].copy()
    reseeded = np.zeros(g, dtype=bool)
    labels = None
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=g)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            if np.any(reseeded[empty]):
                raise InitFailure(f"cluster {int(empty[reseeded[empty]][0])} emptied twice")
            far = d2[np.arange(n), new]
            for i in empty:
                j = int(np.argmax(far))
                centers[i] = X[j]
                far[j] = -1.0
                reseeded[i] = True
            labels = None
            continue
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([X[labels == i].mean(axis=0) for i in range(g)])
    if labels is None:
        raise InitFailure("k-means did not settle on a non-empty partition")

    counts = np.bincount(labels, minlength=g)
    pi = np.maximum(counts / n, 1.0 / (2 * n))
    pi /= pi.sum()
    resid = (X - centers[labels]) ** 2
    if cov_mode is CovMode.EQUAL:
        s2 = np.repeat(np.maximum(resid.mean(axis=0), VARIANCE_FLOOR)[None, :], g, axis=0)
    else:
        s2 = np.stack([resid[labels == i].mean(axis=0) for i in range(g)])
        s2 = np.maximum(s2, VARIANCE_FLOOR)
    return MixtureParams(pi, centers, s2, cov_mode)


@dataclass(frozen=True)
class GridSpec:
    g_values: tuple[int, ...]
    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]
    n_starts: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("g_values", "lambda1_values", "lambda2_values"):
            vals = tuple(getattr(self, name))
            if not vals or list(vals) != sorted(vals):
                raise ConfigError(f"{name} must be a non-empty ascending list")
            object.__setattr__(self, name, vals)
        if min(self.g_values) < 1:
            raise ConfigError("g values must be positive")
        if min(self.lambda1_values) < 0 or min(self.lambda2_values) < 0:
            raise ConfigError("lambda values must be non-negative")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    @classmethod
    def default(cls, n: int, g_values=(1, 2, 3), n_starts: int = 10, seed: int = 0) -> GridSpec:
        grid = default_lambda_grid(n)
        return cls(tuple(g_values), grid, grid, n_starts, seed)

    def cells(self) -> list[tuple[int, float, float]]:
        """Grid cells in index order: g outermost, then lambda1, then lambda2."""
        return [(g, l1, l2) for g in self.g_values for l1 in self.lambda1_values for l2 in self.lambda2_values]


@dataclass(frozen=True)
class CellRecord:
    g: int
    lambda1: float
    lambda2: float
    bic: float
    df: int
    status: str
    penalized_loglik: float
    loglik: float
    start_scores: tuple[float, ...]
    rejected_starts: int

    @property
    def fit_failed(self) -> bool:
        return self.status == "all_starts_degenerate"


@dataclass(frozen=True)
class SelectionResult:
    best: FitResult
    best_cell: tuple[int, float, float]
    table: tuple[CellRecord, ...]
    best_by_g: dict = field(default_factory=dict)
    stage1: SelectionResult | None = None


def start_seed(seed: int, cell: int, start: int) -> int:
    """Deterministic 64-bit seed for one (cell, start) pair."""
    return int(np.random.SeedSequence([int(seed), cell, start]).generate_state(1, np.uint64)[0])


def _usable(fit: FitResult, reject_floor: bool, min_size: int) -> bool:
    if fit.status is FitStatus.DEGENERATE_CLUSTER:
        return False
    if fit.params.g > 1 and np.bincount(fit.labels, minlength=fit.params.g).min() < min_size:
        return False
    return not (reject_floor and fit.floor_hits > 0)


def _align(weights, reference_mu: np.ndarray, init: MixtureParams):
    """Permute per-component weight rows onto the components of ``init``."""
    w, v = weights
    if init.g == 1:
        return w, v
    cost = ((init.mu[:, None, :] - reference_mu[None, :, :]) ** 2).sum(axis=2)
    _, perm = linear_sum_assignment(cost)
    return w[perm], v[perm]


@dataclass(frozen=True)
class _CellJob:
    data: Dataset
    index: int
    cell: tuple[int, float, float]
    n_starts: int
    seed: int
    template: PenaltyConfig
    cov_mode: CovMode
    stop: StopRule
    weights: tuple | None
    reference_mu: np.ndarray | None
    reject_floor: bool
    min_size: int
    tol_zero: float
    corrected: bool


def _run_cell(job: _CellJob):
    g, l1, l2 = job.cell
    base = job.template.with_lambdas(l1, l2)
    starts = 1 if g == 1 else job.n_starts
    best, scores, rejected = None, [], 0
    for s in range(starts):
        try:
            init = kmeans_init(job.data, g, start_seed(job.seed, job.index, s), job.cov_mode)
        except InitFailure:
            rejected += 1
            continue
        pen = base
        if job.weights is not None:
            w, v = _align(job.weights, job.reference_mu, init)
            pen = replace(base, mean_weights=w, var_weights=v)
        fit = em_fit(job.data, g, pen, job.cov_mode, init, job.stop)
        if not _usable(fit, job.reject_floor, job.min_size):
            rejected += 1
            continue
        scores.append(fit.penalized_loglik)
        if best is None or fit.penalized_loglik > best.penalized_loglik:
            best = fit
    if best is None:
        rec = CellRecord(g, l1, l2, math.inf, -1, "all_starts_degenerate", math.nan, math.nan, (), rejected)
        return rec, None
    df = effective_df(best.params, job.tol_zero, job.corrected)
    rec = CellRecord(
        g, l1, l2, bic(best, job.data.n, job.tol_zero, job.corrected), df, best.status.value,
        best.penalized_loglik, best.loglik, tuple(scores), rejected,
    )
    return rec, best


def _tie_key(rec: CellRecord):
    return (rec.bic, -rec.lambda1, -rec.lambda2, rec.g)


def grid_search(
    data: Dataset,
    spec: GridSpec,
    penalty_template: PenaltyConfig = PenaltyConfig(),
    cov_mode: CovMode | str = CovMode.UNEQUAL,
    stop: StopRule = StopRule(),
    *,
    weights_by_g: dict | None = None,
    reject_floor_hits: bool = True,
    min_cluster_size: int = MIN_CLUSTER_SIZE,
    tol_zero: float = 0.0,
    corrected_df: bool = False,
    n_jobs: int = 1,
) -> SelectionResult:
    """Fit every grid cell from ``spec.n_starts`` k-means starts and pick the minimum BIC.

    Within a cell the start with the largest penalized log-likelihood is
    kept.  Starts that end with a degenerate cluster are discarded, and by
    default so are starts with a variance clamped at the floor or, when
    ``g > 1``, with a component holding fewer than ``min_cluster_size``
    observations under MAP assignment.  Such a component either is empty
    (really a model with fewer clusters) or sits on a few points with
    collapsed variances, a spurious likelihood spike.  A cell with no usable
    start is recorded with infinite BIC.  BIC ties go to the larger
    lambda1, then the larger lambda2, then the smaller g.

    ``weights_by_g`` maps ``g`` to ``(w, v, reference_mu)``; the weight rows
    are matched to each start's components by their centroids.

    Cells are independent; ``n_jobs > 1`` spreads them over processes and
    the results are merged in cell order, so the output does not depend on
    ``n_jobs``.

    Raises
    ------
    GlobalFailure
        If no cell has a usable start.
    """
    cov_mode = CovMode(cov_mode)
    jobs = []
    for index, cell in enumerate(spec.cells()):
        weights = ref = None
        if weights_by_g is not None:
            w, v, ref = weights_by_g[cell[0]]
            weights = (w, v)
        jobs.append(
            _CellJob(data, index, cell, spec.n_starts, spec.seed, penalty_template, cov_mode, stop,
                     weights, ref, reject_floor_hits, min_cluster_size, tol_zero, corrected_df)
        )
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]

    table = tuple(rec for rec, _ in results)
    ok = [(rec, fit) for rec, fit in results if fit is not None]
    if not ok:
        raise GlobalFailure("every grid cell failed")
    best_rec, best_fit = min(ok, key=lambda rf: _tie_key(rf[0]))
    by_g = {}
    for g in spec.g_values:
        at_g = [rf for rf in ok if rf[0].g == g]
        if at_g:
            by_g[g] = min(at_g, key=lambda rf: _tie_key(rf[0]))[1]
    return SelectionResult(best_fit, (best_rec.g, best_rec.lambda1, best_rec.lambda2), table, by_g)


def failed_cells(result: SelectionResult) -> list[AllStartsDegenerate]:
    """The per-cell failures of a search, as exception objects."""
    return [AllStartsDegenerate((r.g, r.lambda1, r.lambda2)) for r in result.table if r.fit_failed]


def adaptive_pipeline(
    data: Dataset,
    spec: GridSpec,
    stop: StopRule = StopRule(),
    *,
    exponent: float = 1.0,
    **search_kw,
) -> SelectionResult:
    """Two-stage search: plain scheme-one penalties, then adaptively weighted ones.

    Stage-two weights for each ``g`` come from the BIC-best stage-one fit
    with that ``g``.  Parameters that fit estimated exactly at their null
    value receive infinite weight and stay pinned in stage two.
    """
    template = PenaltyConfig(scheme=Scheme.VAR_MINUS_ONE)
    stage1 = grid_search(data, spec, template, CovMode.UNEQUAL, stop, **search_kw)
    weights_by_g = {}
    for g, fit in stage1.best_by_g.items():
        w, v = adaptive_weights(fit.params, exponent)
        weights_by_g[g] = (w, v, np.array(fit.params.mu))
    # a g without any usable stage-one fit has no weights; stage two skips it
    spec2 = replace(spec, g_values=tuple(g for g in spec.g_values if g in weights_by_g))
    stage2 = grid_search(
        data, spec2, template, CovMode.UNEQUAL, stop, weights_by_g=weights_by_g, **search_kw
    )
    return replace(stage2, stage1=stage1)
