"""Seeded generators for the simulation designs.

Every two-cluster design puts exactly ``sizes[0]`` observations in cluster 1
followed by ``sizes[1]`` in cluster 2.  Cluster 1 is ``N(0, 1)`` in every
variable; cluster 2 differs on the informative variables only.  The data
are standardized after generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from penclust.errors import ConfigError
from penclust.model import Dataset, Grouping, standardize

# cluster-2 (mean, variance) of the informative variables in each case-I set-up
CASE1_SETUPS = {1: None, 2: (1.5, 1.0), 3: (0.0, 2.0), 4: (1.5, 2.0)}
CASE2_BLOCKS = ((1.5, 1.0), (0.0, 2.0), (1.5, 2.0))
CASE2_GROUP_SIZE = {5: 5, 7: 7, 10: 5}
N_OBS = 100


@dataclass(frozen=True)
class LabeledDataset:
    """Simulated data with its ground truth.

    ``block_ids`` is 0 for noise variables and ``1..B`` for the informative
    blocks (case I uses a single block).
    """

    data: Dataset
    raw: np.ndarray
    true_labels: np.ndarray
    informative_mask: np.ndarray
    block_ids: np.ndarray
    true_g: int

    @property
    def n_blocks(self) -> int:
        return int(self.block_ids.max())


def _two_clusters(rng, n, K, sizes, blocks):
    if sum(sizes) != n:
        raise ConfigError("cluster sizes must add up to n")
    x = rng.standard_normal((n, K))
    rows = slice(sizes[0], n)
    block_ids = np.zeros(K, dtype=np.int64)
    start = 0
    for b, (width, (mean, var)) in enumerate(blocks, start=1):
        cols = slice(start, start + width)
        x[rows, cols] = mean + math.sqrt(var) * x[rows, cols]
        block_ids[cols] = b
        start += width
    labels = np.repeat([1, 2], sizes)
    return x, labels, block_ids


def _labeled(x, labels, block_ids, true_g):
    return LabeledDataset(standardize(x), x, labels, block_ids > 0, block_ids, true_g)


def generate_case1(
    setup: int, seed: int, K: int = 300, n_informative: int = 21, n: int = N_OBS, sizes=(80, 20)
) -> LabeledDataset:
    """Set-up 1 is a single ``N(0, 1)`` population; set-ups 2 to 4 have two clusters."""
    if setup not in CASE1_SETUPS:
        raise ConfigError(f"setup must be one of 1-4, got {setup!r}")
    if not 0 < n_informative <= K:
        raise ConfigError("need 0 < n_informative <= K")
    rng = np.random.default_rng(seed)
    if setup == 1:
        x = rng.standard_normal((n, K))
        return _labeled(x, np.ones(n, dtype=np.int64), np.zeros(K, dtype=np.int64), 1)
    x, labels, block_ids = _two_clusters(rng, n, K, sizes, [(n_informative, CASE1_SETUPS[setup])])
    return _labeled(x, labels, block_ids, 2)


def generate_case2(K1: int, seed: int, K: int = 300, n: int = N_OBS, sizes=(80, 20)) -> LabeledDataset:
    """Three consecutive informative blocks of ``K1`` variables, then noise.

    Block 1 shifts the mean, block 2 doubles the variance, block 3 does both.
    """
    if K1 < 1 or 3 * K1 > K:
        raise ConfigError(f"need 1 <= 3*K1 <= K, got K1={K1}")
    rng = np.random.default_rng(seed)
    x, labels, block_ids = _two_clusters(rng, n, K, sizes, [(K1, p) for p in CASE2_BLOCKS])
    return _labeled(x, labels, block_ids, 2)


def _chunks(start: int, stop: int, size: int) -> list[range]:
    return [range(a, min(a + size, stop)) for a in range(start, stop, size)]


def make_grouping_case2(
    K1: int,
    group_size_map: dict | None = None,
    K: int = 300,
    group_means: bool = True,
    group_variances: bool = True,
) -> Grouping:
    """Contiguous groups: each informative block and the noise tail are cut
    into chunks of the design's group size; a short chunk takes any remainder.
    """
    sizes = CASE2_GROUP_SIZE if group_size_map is None else group_size_map
    if K1 not in sizes:
        raise ConfigError(f"no group size configured for K1={K1}")
    size = int(sizes[K1])
    chunks = []
    for b in range(3):
        chunks += _chunks(b * K1, (b + 1) * K1, size)
    chunks += _chunks(3 * K1, K, size)
    group_of = np.empty(K, dtype=np.int64)
    for gid, ch in enumerate(chunks, start=1):
        group_of[list(ch)] = gid
    return Grouping(group_of, group_means, group_variances)
