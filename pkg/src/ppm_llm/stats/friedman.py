"""Friedman rank test with the Nemenyi post-hoc comparison."""

from __future__ import annotations

import math
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.stats import chi2, rankdata, studentized_range

from ..errors import DegenerateInputError
from .wilcoxon import TestResult, decide

# Studentized range quantiles divided by sqrt(2), infinite degrees of freedom
# (two-tailed Nemenyi critical values, groups k = 2..10).
Q_TABLE = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164},
    0.01: {2: 2.576, 3: 2.913, 4: 3.113, 5: 3.255, 6: 3.364, 7: 3.452, 8: 3.526, 9: 3.590, 10: 3.646},
}


def nemenyi_q(k: int, alpha: float) -> float:
    """Critical q for ``k`` groups; outside the table it is computed from the distribution."""
    table = Q_TABLE.get(alpha)
    if table is not None and k in table:
        return table[k]
    return float(studentized_range.ppf(1 - alpha, k, np.inf) / math.sqrt(2))


def critical_difference(k: int, n_blocks: int, alpha: float = 0.05) -> float:
    return nemenyi_q(k, alpha) * math.sqrt(k * (k + 1) / (6 * n_blocks))


def nemenyi_p(rank_diff: float, k: int, n_blocks: int) -> float:
    if k < 2:
        raise ValueError("need at least two groups")
    z = abs(rank_diff) / math.sqrt(k * (k + 1) / (6 * n_blocks))
    return float(min(1.0, studentized_range.sf(z * math.sqrt(2), k, np.inf)))


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def friedman_nemenyi(scores: Sequence[Sequence[float]], alpha: float = 0.05) -> TestResult:
    """Friedman chi-square over within-block ranks, then Nemenyi pairwise decisions.

    ``scores`` has one row per block and one column per group. ``extra`` carries
    the average ranks, the critical difference and, per pair, the rank
    difference, its p-value and whether it exceeds the critical difference.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim != 2:
        raise ValueError("scores must be a blocks x groups matrix")
    n, k = x.shape
    if n < 2 or k < 2:
        raise ValueError("need at least 2 blocks and 2 groups")
    if np.all(x == x.flat[0]):
        raise DegenerateInputError("every score is identical")
    ranks = np.vstack([rankdata(row) for row in x])
    mean_ranks = ranks.mean(axis=0)
    stat = 12 * n / (k * (k + 1)) * float(np.sum((mean_ranks - (k + 1) / 2) ** 2))
    ties = 0.0
    for row in ranks:
        _, t = np.unique(row, return_counts=True)
        ties += float((t ** 3 - t).sum())
    correction = 1 - ties / (n * k * (k * k - 1))
    if correction <= 0:
        stat, p = 0.0, 1.0  # every block fully tied
    else:
        stat /= correction
        p = float(chi2.sf(stat, k - 1))
    cd = critical_difference(k, n, alpha)
    pvals = np.ones((k, k))
    pairs = []
    for i, j in combinations(range(k), 2):
        diff = float(mean_ranks[i] - mean_ranks[j])
        pij = nemenyi_p(diff, k, n)
        pvals[i, j] = pvals[j, i] = pij
        pairs.append({"i": i, "j": j, "rank_diff": diff, "p_value": pij, "reject": abs(diff) > cd})
    return TestResult(
        "friedman_nemenyi",
        stat,
        p,
        alpha,
        decide(p, alpha),
        n,
        "chi2",
        pairwise=tuple(tuple(r) for r in pvals.tolist()),
        extra={"mean_ranks": mean_ranks.tolist(), "critical_difference": cd, "pairs": pairs},
    )
