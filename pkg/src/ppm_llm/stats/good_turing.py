"""Good-Turing estimate of how likely an unseen pattern family is.

For a family observed ``r`` times the raw estimate is
``P*(r) = (r + 1) * N_{r+1} / (N_r * N)``, the unseen mass is ``P0 = N_1 / N``
and ``m`` further observations are expected to bring ``m * P0`` new families.

Raw estimates are not normalised: a family counted ``s`` times contributes
nothing when no family was counted ``s - 1`` times, so
``sum_r N_r P*(r) + P0`` falls short of 1 by exactly that stranded mass.
``p_star_normalized`` rescales the observed estimates to fill ``1 - P0``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..errors import DegenerateInputError

DEFAULT_M = (1, 10, 100)


@dataclass(frozen=True)
class GoodTuringEstimate:
    counts: Mapping[str, int]
    N: int
    N_r: Mapping[int, int]
    p_star: Mapping[int, float]
    p_star_normalized: Mapping[int, float]
    p0: float
    stranded_mass: float
    expected: Mapping[int, float] = field(default_factory=dict)

    def expected_novel(self, m: float) -> float:
        return m * self.p0

    @property
    def raw_total(self) -> float:
        return sum(self.N_r[r] * self.p_star[r] for r in self.N_r) + self.p0


def good_turing(counts: Mapping[str, int], m_values: Iterable[int] = DEFAULT_M) -> GoodTuringEstimate:
    if not counts:
        raise DegenerateInputError("Good-Turing needs at least one observed family")
    if any(int(c) < 1 for c in counts.values()):
        raise ValueError("every observed family needs a count of at least 1")
    counts = {k: int(v) for k, v in counts.items()}
    N = sum(counts.values())
    N_r = dict(sorted(Counter(counts.values()).items()))
    p_star = {r: (r + 1) * N_r.get(r + 1, 0) / (N_r[r] * N) for r in N_r}
    p0 = N_r.get(1, 0) / N
    stranded = sum(s * n for s, n in N_r.items() if s >= 2 and N_r.get(s - 1, 0) == 0) / N
    observed = sum(N_r[r] * p_star[r] for r in N_r)
    if observed > 0:
        scale = (1 - p0) / observed
        normalized = {r: p_star[r] * scale for r in N_r}
    else:
        # no adjacent frequency classes at all: fall back to scaled relative frequencies
        normalized = {r: (1 - p0) * r / N for r in N_r}
    expected = {int(m): m * p0 for m in m_values}
    return GoodTuringEstimate(counts, N, N_r, p_star, normalized, p0, stranded, expected)


def counts_from_tags(tags: Iterable[str], skip: Iterable[str] = ("untagged",)) -> dict[str, int]:
    skip = set(skip)
    return dict(sorted(Counter(t for t in tags if t not in skip).items()))
