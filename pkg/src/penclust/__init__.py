"""Penalized model-based clustering with variable selection.

Diagonal Gaussian mixtures fitted by EM, with L1 penalties that shrink
cluster means towards 0 and cluster variances towards 1 (after
standardization), optional grouped penalties, and BIC selection of the
number of clusters and the penalty strengths.
"""

from __future__ import annotations

__version__ = "0.1.0"

from penclust._core import available_backends, backend, use_backend
from penclust.em import StopRule, adaptive_weights, e_step, em_fit
from penclust.errors import *  # noqa: F401,F403
from penclust.grouped import (
    GroupBlockInput,
    check_group_variance_at_one,
    update_group_mean,
    update_group_variance,
)
from penclust.metrics import adjusted_rand_index, noise_counts, rand_index
from penclust.model import (
    CovMode,
    Dataset,
    FitResult,
    FitStatus,
    Grouping,
    MixtureParams,
    PenaltyConfig,
    Scheme,
    log_component_density,
    penalized_loglik,
    penalty_value,
    standardize,
)
from penclust.selection import (
    GridSpec,
    SelectionResult,
    adaptive_pipeline,
    bic,
    effective_df,
    grid_search,
    kmeans_init,
)
from penclust.sim import generate_case1, generate_case2, make_grouping_case2

__all__ = [
    "CovMode", "Dataset", "FitResult", "FitStatus", "GridSpec", "GroupBlockInput", "Grouping",
    "MixtureParams", "PenaltyConfig", "Scheme", "SelectionResult", "StopRule",
    "adaptive_pipeline", "adaptive_weights", "adjusted_rand_index", "available_backends", "backend",
    "bic", "check_group_variance_at_one", "e_step", "effective_df", "em_fit", "generate_case1",
    "generate_case2", "grid_search", "kmeans_init", "log_component_density", "make_grouping_case2",
    "noise_counts", "penalized_loglik", "penalty_value", "rand_index", "standardize",
    "update_group_mean", "update_group_variance", "use_backend",
]
