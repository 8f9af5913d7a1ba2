"""Pure-numpy implementations of the hot kernels.

Compatibility contract with the compiled backend: split scores are formed
from exact int64 class counts with one float rounding per division and one
per add, ties resolved by the first strict maximum, so scan_sorted and
apply_tree (pure integer bookkeeping) are bit-identical across backends.
KDE sums accumulate point contributions in the same ascending order on both
sides, but numpy's vectorized exp and libm's scalar exp may round a term
differently by one ulp, so kde_sum agrees only to ~1e-15 relative.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def scan_sorted(
    values: np.ndarray, labels: np.ndarray, n_classes: int, min_leaf: int
) -> tuple[int, float]:
    """Best Gini boundary of one feature given value-sorted rows.

    Returns (pos, score): the left side takes the first `pos` rows and `score`
    is sum-of-squared-counts/size over both sides (maximized). pos = -1 when no
    boundary is valid. Boundaries exist only between distinct adjacent values.
    """
    n = values.shape[0]
    if n < 2 * min_leaf or n < 2:
        return -1, -np.inf
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), labels] = 1
    prefix = np.cumsum(onehot, axis=0)
    total = prefix[-1]
    left_counts = prefix[:-1]
    right_counts = total[None, :] - left_counts
    ssq_left = np.einsum("ij,ij->i", left_counts, left_counts)
    ssq_right = np.einsum("ij,ij->i", right_counts, right_counts)
    sizes_left = np.arange(1, n, dtype=np.int64)
    sizes_right = n - sizes_left
    score = ssq_left / sizes_left + ssq_right / sizes_right
    valid = (
        (values[1:] != values[:-1])
        & (sizes_left >= min_leaf)
        & (sizes_right >= min_leaf)
    )
    if not valid.any():
        return -1, -np.inf
    score[~valid] = -np.inf
    best = int(np.argmax(score))
    return best + 1, float(score[best])


def apply_tree(
    feature: np.ndarray,
    threshold: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    X: np.ndarray,
) -> np.ndarray:
    """Route rows of X to leaf node indices. feature[node] < 0 marks a leaf."""
    idx = np.zeros(X.shape[0], dtype=np.int32)
    active = feature[idx] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        nodes = idx[rows]
        go_left = X[rows, feature[nodes]] <= threshold[nodes]
        idx[rows] = np.where(go_left, left[nodes], right[nodes]).astype(np.int32)
        active = feature[idx] >= 0
    return idx


def kde_sum(points: np.ndarray, inv_bw: float, queries: np.ndarray) -> np.ndarray:
    """Sum over points of exp(-((q - p) / bw)^2 / 2), per query."""
    acc = np.zeros(queries.shape[0], dtype=np.float64)
    for p in points:
        d = (queries - p) * inv_bw
        dd = d * d
        acc += np.exp(-0.5 * dd)
    return acc
