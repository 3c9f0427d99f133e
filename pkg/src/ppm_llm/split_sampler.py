"""Temporal train/test split, truncation to running prefixes and seeded sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .event_log import EventLog, Trace

DEFAULT_PRNG = "pcg64"
_BIT_GENERATORS = {
    "pcg64": np.random.PCG64,
    "pcg64dxsm": np.random.PCG64DXSM,
    "mt19937": np.random.MT19937,
    "philox": np.random.Philox,
    "sfc64": np.random.SFC64,
}


def make_rng(seed: int, prng: str = DEFAULT_PRNG) -> np.random.Generator:
    try:
        bitgen = _BIT_GENERATORS[prng.lower()]
    except KeyError:
        raise ValueError(f"unknown PRNG {prng!r}; choose from {sorted(_BIT_GENERATORS)}") from None
    return np.random.Generator(bitgen(seed))


@dataclass(frozen=True)
class SplitResult:
    t_split: datetime
    train: EventLog
    test_completed: EventLog
    test_truncated: EventLog
    validation: EventLog | None = None
    skipped: tuple[str, ...] = field(default_factory=tuple)

    def ground_truth(self) -> dict[str, Trace]:
        """Completed counterpart of every truncated trace, keyed by case id."""
        done = self.test_completed.by_case()
        return {t.case_id: done[t.case_id] for t in self.test_truncated.traces}

    def manifest_rows(self) -> list[tuple[str, str, int]]:
        rows = [(t.case_id, "train", len(t)) for t in self.train.traces]
        if self.validation is not None:
            rows += [(t.case_id, "validation", len(t)) for t in self.validation.traces]
        truncated = {t.case_id: len(t) for t in self.test_truncated.traces}
        for t in self.test_completed.traces:
            if t.case_id in truncated:
                rows.append((t.case_id, "test", truncated[t.case_id]))
            else:
                rows.append((t.case_id, "skipped", 0))
        return rows

    def write_manifest(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "bucket", "truncation_length"])
            writer.writerows(self.manifest_rows())


def _required_count(n: int, fraction: float) -> int:
    # round() absorbs float noise such as 0.7 * 10 = 7.000000000000001
    return max(1, math.ceil(round(fraction * n, 9)))


def compute_t_split(log: EventLog, fraction: float = 0.8) -> datetime:
    """Earliest time at which at least ``fraction`` of the traces have completed."""
    if not log.traces:
        raise ValueError("cannot split an empty log")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if any(not t.events for t in log.traces):
        raise ValueError("log contains empty traces")
    completions = sorted(t.completion for t in log.traces)
    return completions[_required_count(len(completions), fraction) - 1]


def truncate(trace: Trace, t_split: datetime) -> Trace:
    """Longest prefix of ``trace`` whose events all end by ``t_split``."""
    n = 0
    for e in trace.events:
        if e.t_end > t_split:
            break
        n += 1
    return trace.prefix(n)


def temporal_split(log: EventLog, t_split: datetime) -> SplitResult:
    comp, run, trunc, skipped = [], [], [], []
    for t in log.traces:
        if t.events and t.completion <= t_split:
            comp.append(t)
            continue
        run.append(t)
        prefix = truncate(t, t_split)
        if prefix.events:
            trunc.append(prefix)
        else:
            skipped.append(t.case_id)
    return SplitResult(
        t_split=t_split,
        train=log.subset(comp),
        test_completed=log.subset(run),
        test_truncated=log.subset(trunc),
        skipped=tuple(skipped),
    )


def sample_training(train: EventLog, n: int, seed: int, prng: str = DEFAULT_PRNG) -> EventLog:
    """Uniform sample of ``n`` traces without replacement, in sampled order."""
    if n > len(train):
        raise ValueError(f"cannot sample {n} traces from a log of {len(train)}")
    if n < 0:
        raise ValueError("sample size must be non-negative")
    order = make_rng(seed, prng).permutation(len(train))[:n]
    return train.subset([train.traces[i] for i in order])


def sample_validation(
    train: EventLog, fraction: float, seed: int, prng: str = DEFAULT_PRNG
) -> tuple[EventLog, EventLog]:
    """Split off a random validation share; returns ``(reduced_train, validation)``.

    Both parts keep the original trace order.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"validation fraction must lie in (0, 1), got {fraction}")
    n = len(train)
    n_valid = math.floor(fraction * n + 0.5)
    picked = set(make_rng(seed, prng).permutation(n)[:n_valid].tolist())
    keep = [t for i, t in enumerate(train.traces) if i not in picked]
    valid = [t for i, t in enumerate(train.traces) if i in picked]
    return train.subset(keep), train.subset(valid)
