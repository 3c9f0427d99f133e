"""Distance between a growing sample's KPI distribution and the full log's."""

from __future__ import annotations

from bisect import bisect_right
from typing import Sequence

from ..event_log import EventLog, LogSchema, kpi_value
from ..split_sampler import DEFAULT_PRNG, make_rng


def ks_statistic(sample: Sequence[float], reference: Sequence[float]) -> float:
    """Largest gap between the two empirical CDFs."""
    if not sample or not reference:
        raise ValueError("KS statistic needs two non-empty samples")
    a, b = sorted(sample), sorted(reference)
    gap = 0.0
    for x in sorted(set(a) | set(b)):
        fa = bisect_right(a, x) / len(a)
        fb = bisect_right(b, x) / len(b)
        gap = max(gap, abs(fa - fb))
    return gap


def convergence_curve(
    log: EventLog,
    schema: LogSchema | None,
    grid: Sequence[int],
    seed: int,
    prng: str = DEFAULT_PRNG,
) -> list[tuple[int, float]]:
    """KS distance of the first ``n`` sampled traces' KPI values to the whole log, per ``n``.

    A single permutation is drawn, so each sample extends the previous one.
    """
    schema = schema or log.schema
    values = [float(kpi_value(t, schema)) for t in log.traces]
    for n in grid:
        if not 1 <= n <= len(values):
            raise ValueError(f"grid value {n} outside 1..{len(values)}")
    order = make_rng(seed, prng).permutation(len(values))
    shuffled = [values[i] for i in order]
    return [(int(n), ks_statistic(shuffled[:n], values)) for n in grid]
