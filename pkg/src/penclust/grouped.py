"""Block M-step solvers for group-penalized means and variances.

A block is the set of ``k_m`` variables of one group inside one component.
Its mean update maximizes

    -sum_k (T mu_k^2 - 2 sx_k mu_k) / (2 s_k) - lambda1 sqrt(k_m) ||mu||

and its variance update maximizes

    sum_k (-b log x_k - c_k / x_k) - lambda2 sqrt(k_m) ||x - 1||

with ``T = sum_j tau_ij``, ``b = T / 2`` and ``c_k = sum_j tau_ij (x_jk - mu_k)^2 / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from penclust._core import kernels
from penclust.errors import EmptyCluster, NoConvergence
from penclust.model import VARIANCE_FLOOR

EMPTY_TOL = 1e-8


@dataclass(frozen=True)
class GroupBlockInput:
    """Sufficient statistics of one (component, group) block."""

    tau_sum: float
    weighted_x: np.ndarray
    weighted_sq: np.ndarray
    sigma2_block: np.ndarray

    def __post_init__(self):
        for name in ("weighted_x", "weighted_sq", "sigma2_block"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = self.weighted_x.size
        if k == 0 or self.weighted_sq.size != k or self.sigma2_block.size != k:
            raise ValueError("block vectors must be non-empty and of equal length")
        if np.any(self.sigma2_block <= 0):
            raise ValueError("block variances must be positive")

    @property
    def k_m(self) -> int:
        return self.weighted_x.size

    @property
    def b(self) -> float:
        return self.tau_sum / 2.0

    @property
    def c(self) -> np.ndarray:
        return self.weighted_sq / 2.0


def _require_mass(block: GroupBlockInput) -> None:
    if not block.tau_sum > EMPTY_TOL:
        raise EmptyCluster(f"component mass {block.tau_sum!r} is numerically zero")


def update_group_mean(
    block: GroupBlockInput, lambda1: float, mu_init: np.ndarray | None = None
) -> np.ndarray:
    """Maximizer of the block mean objective.

    The maximizer is unique, so ``mu_init`` does not affect the result; it is
    accepted for interface symmetry with :func:`update_group_variance`.

    Raises
    ------
    EmptyCluster
        If ``tau_sum`` is at most 1e-8.
    NoConvergence
        If the inner root finder hits its iteration cap; ``best`` holds its
        last iterate.
    """
    _require_mass(block)
    L = lambda1 * math.sqrt(block.k_m)
    mu, ok = kernels.group_mean(block.weighted_x, block.tau_sum, block.sigma2_block, L)
    if not ok:
        raise NoConvergence("group mean solver hit its iteration cap", best=mu)
    return mu


def check_group_variance_at_one(block: GroupBlockInput, lambda2: float) -> bool:
    """Whether the all-ones block passes the first-order test for a local maximum."""
    return bool(kernels.check_group_variance_at_one(block.b, block.c, lambda2 * math.sqrt(block.k_m)))


def group_variance_objective(block: GroupBlockInput, lambda2: float, x) -> float:
    return float(kernels.group_var_objective(block.b, block.c, lambda2 * math.sqrt(block.k_m), x))


def update_group_variance(
    block: GroupBlockInput, lambda2: float, sigma2_init: np.ndarray | None = None
) -> np.ndarray:
    """Ascent update of a variance block (defaults to starting at ``sigma2_block``).

    The result never scores below ``sigma2_init`` under the block objective,
    and every coordinate lies between 1 and its unpenalized estimate ``c/b``
    unless it is kept at ``sigma2_init``.

    Raises
    ------
    EmptyCluster
        If ``tau_sum`` is at most 1e-8.
    NoConvergence
        If the outer solve exhausts its evaluation budget; ``best`` holds a
        valid ascent step.
    """
    _require_mass(block)
    if lambda2 == 0:
        return np.maximum(block.c / block.b, VARIANCE_FLOOR)
    init = block.sigma2_block if sigma2_init is None else np.asarray(sigma2_init, dtype=np.float64)
    s, ok = kernels.group_variance(block.b, block.c, lambda2 * math.sqrt(block.k_m), init)
    if not ok:
        raise NoConvergence("group variance solver hit its iteration cap", best=s)
    return s
