"""MAE and F1 over paired (actual, predicted) values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from ..errors import DegenerateInputError


@dataclass(frozen=True)
class MetricResult:
    metric: str
    value: float
    n: int
    per_instance: tuple[tuple[Any, Any], ...] = ()
    degenerate: bool = False
    details: dict[str, float] = field(default_factory=dict)


def mae(pairs: Sequence[tuple[float, float]]) -> MetricResult:
    if not pairs:
        raise DegenerateInputError("MAE of an empty sample")
    total = 0.0
    for y, y_hat in pairs:
        if not (math.isfinite(y) and math.isfinite(y_hat)):
            raise ValueError(f"non-finite pair ({y}, {y_hat})")
        total += abs(y - y_hat)
    return MetricResult("mae", total / len(pairs), len(pairs), tuple(pairs))


def confusion(pairs: Sequence[tuple[bool, bool]]) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` for boolean (actual, predicted) pairs."""
    tp = fp = fn = tn = 0
    for actual, predicted in pairs:
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def f1(pairs: Sequence[tuple[bool, bool]]) -> MetricResult:
    """F1 of the positive class; 0 with ``degenerate=True`` when there is no true positive."""
    if not pairs:
        raise DegenerateInputError("F1 of an empty sample")
    pairs = tuple((bool(a), bool(p)) for a, p in pairs)
    tp, fp, fn, tn = confusion(pairs)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    details = {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "precision": precision, "recall": recall}
    return MetricResult("f1", f1_from_counts(tp, fp, fn), len(pairs), pairs, tp == 0, details)
