"""Partition agreement (Rand, adjusted Rand, matched counts) and noise-variable counts."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from penclust.errors import LengthMismatch


def contingency(a, b) -> np.ndarray:
    """Counts ``n_ij`` of observations labeled ``i``-th value in ``a`` and ``j``-th in ``b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"label vectors have shapes {a.shape} and {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _pairs(x) -> int:
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def rand_index(a, b) -> float:
    """Share of unordered pairs on which two partitions agree."""
    t = contingency(a, b)
    n = int(t.sum())
    if n < 2:
        raise LengthMismatch("need at least two observations")
    total = n * (n - 1) // 2
    same_both = _pairs(t)
    agree = total + 2 * same_both - _pairs(t.sum(axis=1)) - _pairs(t.sum(axis=0))
    return float(Fraction(agree, total))


def adjusted_rand_index(a, b) -> float:
    """Rand index corrected for chance under the permutation model.

    When the chance-corrected denominator vanishes (for instance, one side
    puts everything in a single cluster) the result is 1 for identical
    partitions and 0 otherwise.
    """
    t = contingency(a, b)
    n = int(t.sum())
    if n < 2:
        raise LengthMismatch("need at least two observations")
    index = Fraction(_pairs(t))
    sa, sb = _pairs(t.sum(axis=1)), _pairs(t.sum(axis=0))
    expected = Fraction(sa * sb, n * (n - 1) // 2)
    denom = Fraction(sa + sb, 2) - expected
    if denom == 0:
        identical = t.shape[0] == t.shape[1] and np.count_nonzero(t) == t.shape[0]
        return 1.0 if identical else 0.0
    return float((index - expected) / denom)


def matched_correct(true_labels, est_labels, true_ids=None) -> dict:
    """Correctly assigned observations per true cluster after optimal matching.

    Estimated clusters are matched one-to-one to true clusters so that the
    total overlap is largest (Hungarian algorithm); a true cluster left
    unmatched scores 0.
    """
    true_labels = np.asarray(true_labels)
    est_labels = np.asarray(est_labels)
    if true_labels.shape != est_labels.shape:
        raise LengthMismatch("label vectors differ in length")
    tu = np.unique(true_labels) if true_ids is None else np.asarray(true_ids)
    eu = np.unique(est_labels)
    overlap = np.array([[np.count_nonzero((true_labels == t) & (est_labels == e)) for e in eu] for t in tu])
    rows, cols = linear_sum_assignment(-overlap)
    out = {int(t): 0 for t in tu}
    for r, c in zip(rows, cols):
        out[int(tu[r])] = int(overlap[r, c])
    return out


def noise_counts(noise_indices, block_ids) -> tuple[int, ...]:
    """Predicted-noise variables inside each true block, informative blocks first.

    ``block_ids`` is 0 for a true noise variable and ``1..B`` for the
    informative blocks; the result is ``(z_1, ..., z_B, z_noise)``.
    """
    block_ids = np.asarray(block_ids)
    hit = np.zeros(block_ids.size, dtype=bool)
    hit[np.asarray(noise_indices, dtype=np.int64)] = True
    B = int(block_ids.max())
    return tuple(int(np.count_nonzero(hit & (block_ids == b))) for b in [*range(1, B + 1), 0])
