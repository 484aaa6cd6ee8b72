"""Replication harness: simulate, select a model per method, score against the truth."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from penclust.em import StopRule
from penclust.errors import ConfigError, PenclustError
from penclust.metrics import adjusted_rand_index, matched_correct, noise_counts, rand_index
from penclust.model import CovMode, PenaltyConfig, Scheme
from penclust.selection import GridSpec, adaptive_pipeline, default_lambda_grid, grid_search
from penclust.sim import N_OBS, LabeledDataset, generate_case1, generate_case2, make_grouping_case2


@dataclass(frozen=True)
class Method:
    """One column of the comparison: covariance model, penalty and grouping."""

    name: str
    cov_mode: CovMode = CovMode.UNEQUAL
    scheme: Scheme = Scheme.VAR_MINUS_ONE
    penalize_means: bool = True
    penalize_vars: bool = True
    adaptive: bool = False
    grouping: str = "none"  # none, means or both


METHODS = {
    m.name: m
    for m in (
        Method("unpen", penalize_means=False, penalize_vars=False),
        Method("l1", penalize_vars=False),
        Method("l2", penalize_means=False),
        Method("l1l2"),
        Method("logvar", scheme=Scheme.LOG_VAR),
        Method("adaptive", adaptive=True),
        Method("eq-unpen", CovMode.EQUAL, penalize_means=False, penalize_vars=False),
        Method("eq-l1", CovMode.EQUAL, penalize_vars=False),
        Method("grp-means", grouping="means"),
        Method("grp-both", grouping="both"),
    )
}


@dataclass(frozen=True)
class Design:
    case: int = 1
    setup: int = 2
    K1: int = 10
    K: int = 300
    n_informative: int = 21

    def __post_init__(self):
        if self.case not in (1, 2):
            raise ConfigError(f"case must be 1 or 2, got {self.case!r}")
        if self.case == 1 and self.setup not in (1, 2, 3, 4):
            raise ConfigError(f"setup must be 1-4, got {self.setup!r}")

    def generate(self, seed: int) -> LabeledDataset:
        if self.case == 1:
            return generate_case1(self.setup, seed, self.K, self.n_informative)
        return generate_case2(self.K1, seed, self.K)

    @property
    def label(self) -> str:
        if self.case == 1:
            return f"case1-setup{self.setup}-K{self.K}-inf{self.n_informative}"
        return f"case2-K1_{self.K1}-K{self.K}"


@dataclass(frozen=True)
class ReplicateRow:
    method: str
    replicate: int
    g_hat: int | None
    lambda1: float
    lambda2: float
    bic: float
    z: tuple[int, ...]
    ri: float
    ari: float
    correct: tuple[int, ...]
    error: str = ""


@dataclass
class MethodSummary:
    name: str
    freq: dict[int, int]
    failures: int
    mean_z: tuple[float, ...]
    mean_z_by_g: dict[int, tuple[float, ...]]
    mean_ri: float
    mean_ari: float
    ri_by_g: dict[int, float]
    ari_by_g: dict[int, float]
    correct_by_g: dict[int, tuple[float, ...]]


@dataclass
class BenchSummary:
    design: Design
    replications: int
    seed: int
    methods: dict[str, MethodSummary]
    rows: list[ReplicateRow] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["correct_convention"] = "one-to-one cluster matching maximizing total overlap"
        return out


def replicate_seed(seed: int, replicate: int) -> int:
    return int(np.random.SeedSequence([int(seed), replicate]).generate_state(1, np.uint64)[0])


def _spec_for(method: Method, grid, g_values, n_starts, seed) -> GridSpec:
    l1 = tuple(grid) if method.penalize_means else (0.0,)
    l2 = tuple(grid) if method.penalize_vars and method.cov_mode is CovMode.UNEQUAL else (0.0,)
    return GridSpec(tuple(g_values), l1, l2, n_starts, seed)


def _template(method: Method, design: Design) -> PenaltyConfig:
    grouping = None
    if method.grouping != "none":
        if design.case != 2:
            raise ConfigError(f"method {method.name} needs a case-2 design")
        grouping = make_grouping_case2(design.K1, K=design.K, group_variances=method.grouping == "both")
    return PenaltyConfig(scheme=method.scheme, grouping=grouping)


def _score(method: Method, rep: int, sim: LabeledDataset, result) -> ReplicateRow:
    fit = result.best
    g, l1, l2 = result.best_cell
    est = fit.labels + 1
    corr = matched_correct(sim.true_labels, est, true_ids=range(1, 3))
    return ReplicateRow(
        method.name, rep, g, l1, l2,
        min(r.bic for r in result.table),
        noise_counts(fit.noise_variable_indices, sim.block_ids),
        rand_index(sim.true_labels, est),
        adjusted_rand_index(sim.true_labels, est),
        tuple(corr[k] for k in sorted(corr)),
    )


@dataclass(frozen=True)
class _RepJob:
    design: Design
    methods: tuple[Method, ...]
    rep: int
    seed: int
    grid: tuple[float, ...]
    g_values: tuple[int, ...]
    n_starts: int
    stop: StopRule


def _run_replicate(job: _RepJob) -> list[ReplicateRow]:
    rseed = replicate_seed(job.seed, job.rep)
    sim = job.design.generate(rseed)
    rows = []
    for method in job.methods:
        spec = _spec_for(method, job.grid, job.g_values, job.n_starts, rseed)
        try:
            if method.adaptive:
                result = adaptive_pipeline(sim.data, spec, job.stop)
            else:
                result = grid_search(sim.data, spec, _template(method, job.design), method.cov_mode, job.stop)
            rows.append(_score(method, job.rep, sim, result))
        except PenclustError as exc:
            if isinstance(exc, ConfigError):
                raise
            nz = sim.n_blocks + 1
            rows.append(ReplicateRow(method.name, job.rep, None, math.nan, math.nan, math.nan,
                                     (0,) * nz, math.nan, math.nan, (0, 0), f"{type(exc).__name__}: {exc}"))
    return rows


def _mean(vals) -> float:
    return float(np.mean(vals)) if len(vals) else math.nan


def _summarize(name: str, rows: list[ReplicateRow], g_values) -> MethodSummary:
    ok = [r for r in rows if r.g_hat is not None]
    freq = {g: sum(r.g_hat == g for r in ok) for g in g_values}
    nz = len(rows[0].z) if rows else 0

    def zmean(rs):
        return tuple(_mean([r.z[b] for r in rs]) for b in range(nz))

    by_g = {g: [r for r in ok if r.g_hat == g] for g in g_values}
    return MethodSummary(
        name=name,
        freq=freq,
        failures=len(rows) - len(ok),
        mean_z=zmean(ok),
        mean_z_by_g={g: zmean(rs) for g, rs in by_g.items() if rs},
        mean_ri=_mean([r.ri for r in ok]),
        mean_ari=_mean([r.ari for r in ok]),
        ri_by_g={g: _mean([r.ri for r in rs]) for g, rs in by_g.items() if rs},
        ari_by_g={g: _mean([r.ari for r in rs]) for g, rs in by_g.items() if rs},
        correct_by_g={
            g: tuple(_mean([r.correct[c] for r in rs]) for c in range(2)) for g, rs in by_g.items() if rs
        },
    )


def run_benchmark(
    design: Design,
    methods,
    replications: int,
    seed: int,
    *,
    g_values=(1, 2, 3),
    n_starts: int = 10,
    lambda_grid=None,
    stop: StopRule = StopRule(),
    n_jobs: int = 1,
) -> BenchSummary:
    """Run every method on ``replications`` simulated datasets.

    Replicate ``r`` draws its data and its k-means seeds from ``(seed, r)``,
    so all methods see the same datasets and results do not depend on
    ``n_jobs``.  A method that fails on a replicate is recorded with an
    error message and no selected ``g``.
    """
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    methods = tuple(METHODS[m] if isinstance(m, str) else m for m in methods)
    grid = tuple(lambda_grid) if lambda_grid is not None else default_lambda_grid(N_OBS)
    jobs = [
        _RepJob(design, methods, rep, seed, grid, tuple(g_values), n_starts, stop)
        for rep in range(replications)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_run_replicate, jobs))
    else:
        chunks = [_run_replicate(job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    summaries = {
        m.name: _summarize(m.name, [r for r in rows if r.method == m.name], g_values) for m in methods
    }
    settings = {
        "g_values": list(g_values),
        "n_starts": n_starts,
        "lambda_grid": list(grid),
        "stop": asdict(stop),
        "methods": [asdict(m) for m in methods],
    }
    return BenchSummary(design, replications, seed, summaries, rows, settings)


def summary_tsv(summary: BenchSummary, digits: int = 17) -> str:
    """One line per (method, selected g) with frequency, mean z, RI and aRI."""
    fmt = f"%.{digits}g"
    nz = max((len(r.z) for r in summary.rows), default=2)
    head = ["method", "g", "freq", *[f"z{b + 1}" for b in range(nz)], "RI", "aRI", "corr1", "corr2"]
    lines = ["\t".join(head)]
    for name, ms in summary.methods.items():
        for g, count in ms.freq.items():
            z = ms.mean_z_by_g.get(g, (math.nan,) * nz)
            corr = ms.correct_by_g.get(g, (math.nan, math.nan))
            vals = [*z, ms.ri_by_g.get(g, math.nan), ms.ari_by_g.get(g, math.nan), *corr]
            lines.append("\t".join([name, str(g), str(count), *(fmt % v for v in vals)]))
        if ms.failures:
            lines.append("\t".join([name, "failed", str(ms.failures)] + ["nan"] * (len(head) - 3)))
    return "\n".join(lines) + "\n"
