"""Two-sided Wilcoxon signed-rank test.

The null distribution of the positive rank sum is computed exactly for up to
25 non-zero differences by counting sign assignments over the (possibly tied,
hence half-integer) ranks. Larger samples use the normal approximation with
tie correction and no continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateInputError

EXACT_MAX_N = 25
MIN_NONZERO = 5


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    test: str
    statistic: float
    p_value: float
    alpha: float
    decision: str
    n: int = 0
    method: str = ""
    pairwise: tuple[tuple[float, ...], ...] | None = None
    extra: dict | None = None

    @property
    def reject(self) -> bool:
        return self.decision == "reject"


def decide(p_value: float, alpha: float) -> str:
    return "reject" if p_value < alpha else "retain"


def exact_rank_sum_cdf(ranks: Sequence[float], w: float) -> float:
    """P(W+ <= w) when each rank independently carries a + or - sign."""
    doubled = [int(round(2 * r)) for r in ranks]
    counts = [0] * (sum(doubled) + 1)
    counts[0] = 1
    reach = 0
    for r in doubled:
        for s in range(reach, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
        reach += r
    limit = math.floor(2 * w + 1e-9)
    return sum(counts[: limit + 1]) / 2 ** len(doubled)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n < MIN_NONZERO:
        raise DegenerateInputError(f"only {n} non-zero differences; need at least {MIN_NONZERO}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= EXACT_MAX_N:
        p = min(1.0, 2 * exact_rank_sum_cdf(ranks.tolist(), stat))
        method = "exact"
    else:
        _, tie_counts = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4
        var = n * (n + 1) * (2 * n + 1) / 24 - float((tie_counts ** 3 - tie_counts).sum()) / 48
        z = (w_plus - mean) / math.sqrt(var)
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2)))
        method = "normal"
    return TestResult("wilcoxon", stat, p, alpha, decide(p, alpha), n, method,
                      extra={"w_plus": w_plus, "w_minus": w_minus})
