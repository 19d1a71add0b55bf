"""Wilcoxon two-sample statistic, rank-sum form and placement vectors.

Two kernels compute the same integer pair count ``#{(i, i'): y_j[i] <= y_k[i']}``:
``brute`` materializes the full comparison matrix, ``fast`` sorts one
group and binary-searches the other. Both divide the same integer by
``n_j * n_k``, so on any input they agree bit for bit.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .domain import RankCalError

__all__ = ["Placements", "pair_count", "compute_u", "rank_sum_statistic",
           "placements", "counts_below"]


class Placements(NamedTuple):
    """Per-unit placement fractions.

    ``g_j[i]`` is the share of group k at or above ``y_j[i]``;
    ``g_k[i']`` is the share of group j at or below ``y_k[i']``.
    Both average to U.
    """

    g_j: np.ndarray
    g_k: np.ndarray


def _check(y_j, y_k):
    y_j = np.asarray(y_j, dtype=float).ravel()
    y_k = np.asarray(y_k, dtype=float).ravel()
    if y_j.size == 0 or y_k.size == 0:
        raise RankCalError("both groups must contain at least one outcome")
    if not (np.all(np.isfinite(y_j)) and np.all(np.isfinite(y_k))):
        raise RankCalError("outcomes must be finite")
    return y_j, y_k


def _counts_at_or_above(y_j, y_k_sorted):
    # for each y_j[i]: #{i': y_k[i'] >= y_j[i]}
    return y_k_sorted.size - np.searchsorted(y_k_sorted, y_j, side="left")


def counts_below(y_j, y_k):
    """For each ``y_j[i]``, the number of ``y_k`` values ``<= y_j[i]``."""
    y_j, y_k = _check(y_j, y_k)
    return np.searchsorted(np.sort(y_k), y_j, side="right")


def pair_count(y_j, y_k, kernel: str = "fast") -> int:
    """Number of cross-group pairs with ``y_j <= y_k``."""
    y_j, y_k = _check(y_j, y_k)
    if kernel == "brute":
        return int(np.count_nonzero(y_j[:, None] <= y_k[None, :]))
    if kernel == "fast":
        return int(_counts_at_or_above(y_j, np.sort(y_k)).sum())
    raise RankCalError(f"unknown kernel {kernel!r}")


def compute_u(y_j, y_k, kernel: str = "fast") -> float:
    """Wilcoxon two-sample statistic ``U_jk``.

    The fraction of pairs ``(y_j[i], y_k[i'])`` with ``y_j[i] <= y_k[i']``;
    unbiased for ``P(Y_j <= Y_k)``. Ties count as 1, so on tied data
    ``U_jk + U_kj > 1``.
    """
    y_j, y_k = _check(y_j, y_k)
    return pair_count(y_j, y_k, kernel) / (y_j.size * y_k.size)


def rank_sum_statistic(y_j, y_k, kernel: str = "fast") -> float:
    """Rank-sum form ``n_j n_k U_jk + n_j (n_j + 1) / 2``."""
    y_j, y_k = _check(y_j, y_k)
    n_j = y_j.size
    return float(pair_count(y_j, y_k, kernel) + n_j * (n_j + 1) / 2)


def placements(y_j, y_k) -> Placements:
    y_j, y_k = _check(y_j, y_k)
    n_j, n_k = y_j.size, y_k.size
    g_j = _counts_at_or_above(y_j, np.sort(y_k)) / n_k
    g_k = np.searchsorted(np.sort(y_j), y_k, side="right") / n_j
    return Placements(g_j, g_k)
