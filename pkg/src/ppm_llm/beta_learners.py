"""Reproducible predictors distilled from the reasoning patterns an LLM reports.

Regression families (each with mean, median or mode aggregation of the
neighbours' total times):

* ``knn_act``: nearest training traces by Euclidean distance between
  activity-count vectors.
* ``knn_att``: nearest by global-attribute distance (numeric dimensions
  min-max scaled over training, categorical dimensions 0/1 mismatch, mean over
  dimensions).
* ``time_seq``: nearest by distance between cumulative-elapsed sequences over
  the first ``min(len)`` positions, divided by that length.
* ``path_pred``: training traces whose activity sequence extends the prefix,
  backing off to ever shorter suffixes of the prefix and finally to the whole
  training set.

Classification families: ``activity_based`` and ``att_based`` (majority vote
among nearest neighbours), ``state_based`` (share of training traces holding
the prefix's last activity in which the target occurs) and
``positive_evidence`` (the target has already been executed).

Neighbours are taken by ascending distance with ties at the k-th place broken
by training index, so every prediction is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .event_log import CATEGORICAL, NUMERIC, TOTAL_TIME, Attribute, EventLog, LogSchema, Trace, kpi_value

REGRESSION_FAMILIES = ("knn_act", "knn_att", "time_seq", "path_pred")
CLASSIFICATION_FAMILIES = ("activity_based", "state_based", "att_based", "positive_evidence")
AGGREGATIONS = ("mean", "median", "mode")
KNN_FAMILIES = ("knn_act", "knn_att", "time_seq", "activity_based", "att_based")

DEFAULT_K = 10
DEFAULT_BIN_WIDTH = 60


@dataclass(frozen=True)
class BetaLearnerSpec:
    family: str
    aggregation: str = "none"
    k: int = DEFAULT_K
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family in REGRESSION_FAMILIES:
            if self.aggregation not in AGGREGATIONS:
                raise ValueError(f"{self.family} needs an aggregation in {AGGREGATIONS}")
        elif self.family in CLASSIFICATION_FAMILIES:
            if self.aggregation != "none":
                raise ValueError(f"{self.family} takes no aggregation")
        else:
            raise ValueError(f"unknown beta-learner family {self.family!r}")
        if self.k < 1:
            raise ValueError("k must be positive")
        unknown = set(self.params) - {"bin_width", "scale", "tie_positive", "threshold"}
        if unknown:
            raise ValueError(f"unknown beta-learner params {sorted(unknown)}")

    @property
    def is_regression(self) -> bool:
        return self.family in REGRESSION_FAMILIES

    @property
    def id(self) -> str:
        base = self.family if self.aggregation == "none" else f"{self.family}_{self.aggregation}"
        scale = self.params.get("scale", 1.0)
        return base if scale == 1.0 else f"{base}_x{scale:g}"

    @property
    def label(self) -> str:
        """Display name in the style of the result tables, e.g. ``knn act median``."""
        names = {
            "activity_based": "Activity-Based",
            "state_based": "State-Based",
            "att_based": "Att-Based",
            "positive_evidence": "Positive Evidence",
        }
        if self.family in names:
            return names[self.family]
        text = f"{self.family.replace('_', ' ')} {self.aggregation}"
        scale = self.params.get("scale", 1.0)
        return text if scale == 1.0 else f"{text} x{scale:g}"


def default_specs(kpi: str, k: int = DEFAULT_K) -> list[BetaLearnerSpec]:
    if kpi == TOTAL_TIME:
        return [BetaLearnerSpec(f, a, k) for f in REGRESSION_FAMILIES for a in AGGREGATIONS]
    return [BetaLearnerSpec(f, "none", k) for f in CLASSIFICATION_FAMILIES]


def parse_learner_id(text: str, k: int = DEFAULT_K) -> BetaLearnerSpec:
    """``knn_act_median`` -> spec; classification ids are the bare family name."""
    if text in CLASSIFICATION_FAMILIES:
        return BetaLearnerSpec(text, "none", k)
    family, _, agg = text.rpartition("_")
    return BetaLearnerSpec(family, agg, k)


@dataclass(frozen=True)
class Case:
    """What a learner sees of one trace: global values and its event sequence."""

    globals: Mapping[str, Any]
    activities: tuple[str, ...]
    elapsed: tuple[int, ...]
    total_time: int | None = None


def cases_from_log(log: EventLog, schema: LogSchema) -> list[Case]:
    """Training-side view of every trace; ``total_time`` is always filled in."""
    tt_schema = LogSchema(schema.attributes)
    return [
        Case(t.global_values(schema), tuple(t.activities), tuple(t.elapsed_minutes()), kpi_value(t, tt_schema))
        for t in log.traces
    ]


def aggregate(values: Sequence[float], how: str, bin_width: float = DEFAULT_BIN_WIDTH) -> float:
    """Mean, median, or binned mode of ``values``.

    The mode is the median of the values falling in the most populous
    ``bin_width``-wide bin, ties going to the lowest bin.
    """
    if len(values) == 0:
        raise ValueError("cannot aggregate an empty neighbour set")
    arr = np.asarray(values, dtype=float)
    if how == "mean":
        return float(arr.mean())
    if how == "median":
        return float(np.median(arr))
    if how == "mode":
        bins = np.floor(arr / bin_width).astype(np.int64)
        uniq, counts = np.unique(bins, return_counts=True)
        best = uniq[np.argmax(counts)]  # argmax returns the first, i.e. lowest, bin on ties
        return float(np.median(arr[bins == best]))
    raise ValueError(f"unknown aggregation {how!r}")


def _attribute_kinds(schema: LogSchema) -> list[tuple[str, bool]]:
    return [(a.name, a.value_type != CATEGORICAL) for a in schema.global_attributes]


@dataclass
class FittedLearner:
    spec: BetaLearnerSpec
    cases: tuple[Case, ...]
    alphabet: tuple[str, ...]
    attributes: tuple[tuple[str, bool], ...]
    target: str | None = None
    counts: np.ndarray = field(init=False, repr=False)
    total_times: np.ndarray = field(init=False, repr=False)
    attr_min: dict[str, float] = field(init=False, repr=False)
    attr_range: dict[str, float] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        index = {a: i for i, a in enumerate(self.alphabet)}
        other = len(self.alphabet)
        counts = np.zeros((len(self.cases), other + 1), dtype=np.int64)
        for row, case in enumerate(self.cases):
            for act in case.activities:
                counts[row, index.get(act, other)] += 1
        self.counts = counts
        self._index = index
        self._activity_sets = [frozenset(c.activities) for c in self.cases]
        self.total_times = np.array(
            [c.total_time if c.total_time is not None else -1 for c in self.cases], dtype=np.int64
        )
        self.attr_min, self.attr_range = {}, {}
        for name, numeric in self.attributes:
            if numeric:
                col = [float(c.globals[name]) for c in self.cases if c.globals.get(name) is not None]
                lo, hi = (min(col), max(col)) if col else (0.0, 0.0)
                self.attr_min[name], self.attr_range[name] = lo, hi - lo

    @property
    def k(self) -> int:
        return min(self.spec.k, len(self.cases))

    def labels(self, target: str | None = None) -> np.ndarray:
        target = target if target is not None else self.target
        return np.array([target in s for s in self._activity_sets], dtype=bool)

    # distances ---------------------------------------------------------
    def _query_counts(self, query: Case) -> np.ndarray:
        vec = np.zeros(self.counts.shape[1], dtype=np.int64)
        other = len(self.alphabet)
        for act in query.activities:
            vec[self._index.get(act, other)] += 1
        return vec

    def activity_distances(self, query: Case) -> np.ndarray:
        diff = self.counts - self._query_counts(query)
        return np.sqrt((diff * diff).sum(axis=1).astype(float))

    def attribute_distances(self, query: Case) -> np.ndarray:
        n = len(self.cases)
        acc = np.zeros(n, dtype=float)
        if not self.attributes:
            return acc
        for name, numeric in self.attributes:
            q = query.globals.get(name)
            col = np.zeros(n, dtype=float)
            for i, case in enumerate(self.cases):
                v = case.globals.get(name)
                if numeric:
                    rng = self.attr_range[name]
                    if rng > 0 and v is not None and q is not None:
                        col[i] = abs(float(v) - float(q)) / rng
                else:
                    col[i] = 0.0 if v == q else 1.0
            acc += col
        return acc / len(self.attributes)

    def time_distances(self, query: Case) -> np.ndarray:
        out = np.empty(len(self.cases), dtype=float)
        p = query.elapsed
        for i, case in enumerate(self.cases):
            m = min(len(p), len(case.elapsed))
            if m == 0:
                out[i] = math.inf
                continue
            sq = sum((p[j] - case.elapsed[j]) ** 2 for j in range(m))
            out[i] = math.sqrt(sq) / m
        return out

    def distances(self, query: Case) -> np.ndarray:
        family = self.spec.family
        if family in ("knn_act", "activity_based"):
            return self.activity_distances(query)
        if family in ("knn_att", "att_based"):
            return self.attribute_distances(query)
        if family == "time_seq":
            return self.time_distances(query)
        raise ValueError(f"{family} is not a nearest-neighbour family")

    def neighbors(self, query: Case) -> list[int]:
        d = self.distances(query)
        order = np.argsort(d, kind="stable")
        return [int(i) for i in order[: self.k]]

    def path_matches(self, query: Case) -> list[int]:
        prefix = tuple(query.activities)
        L = len(prefix)
        hits = [i for i, c in enumerate(self.cases) if c.activities[:L] == prefix]
        if hits:
            return hits
        for j in range(L - 1, 0, -1):
            suffix = prefix[-j:]
            hits = [i for i, c in enumerate(self.cases) if _contains(c.activities, suffix)]
            if hits:
                return hits
        return list(range(len(self.cases)))

    # predictions -------------------------------------------------------
    def predict_total_time_case(self, query: Case) -> int:
        if not self.spec.is_regression:
            raise ValueError(f"{self.spec.id} is a classification learner")
        if self.spec.family == "path_pred":
            idx = self.path_matches(query)
        else:
            idx = self.neighbors(query)
        bin_width = self.spec.params.get("bin_width", DEFAULT_BIN_WIDTH)
        value = aggregate(self.total_times[idx].tolist(), self.spec.aggregation, bin_width)
        return int(round(value * self.spec.params.get("scale", 1.0)))

    def predict_occurrence_case(self, query: Case, target: str | None = None) -> bool:
        if self.spec.is_regression:
            raise ValueError(f"{self.spec.id} is a regression learner")
        target = target if target is not None else self.target
        family = self.spec.family
        if family == "positive_evidence":
            return target in query.activities
        labels = self.labels(target)
        if family == "state_based":
            last = query.activities[-1] if query.activities else None
            idx = [i for i, s in enumerate(self._activity_sets) if last in s]
            share = labels[idx].mean() if idx else labels.mean()
            return bool(share >= self.spec.params.get("threshold", 0.5))
        votes = labels[self.neighbors(query)]
        pos = int(votes.sum())
        neg = len(votes) - pos
        if pos == neg:
            return bool(self.spec.params.get("tie_positive", True))
        return pos > neg


def _contains(seq: Sequence[str], sub: Sequence[str]) -> bool:
    n = len(sub)
    return any(tuple(seq[i:i + n]) == tuple(sub) for i in range(len(seq) - n + 1))


def fit_cases(
    spec: BetaLearnerSpec,
    cases: Sequence[Case],
    attributes: Sequence[tuple[str, bool]],
    target: str | None = None,
) -> FittedLearner:
    if not cases:
        raise ValueError("cannot fit a beta-learner on an empty training set")
    if not spec.is_regression and target is None:
        raise ValueError(f"{spec.id} needs a target activity")
    if spec.is_regression:
        for c in cases:
            if c.total_time is None or c.total_time < 0:
                raise ValueError("regression training cases need a non-negative total time")
    alphabet = tuple(sorted({a for c in cases for a in c.activities}))
    return FittedLearner(spec, tuple(cases), alphabet, tuple(attributes), target)


def fit(spec: BetaLearnerSpec, train: EventLog, schema: LogSchema | None = None) -> FittedLearner:
    schema = schema or train.schema
    if not train.traces:
        raise ValueError("cannot fit a beta-learner on an empty training log")
    if not spec.is_regression and not schema.target_activity:
        raise ValueError(f"{spec.id} needs schema.target_activity")
    return fit_cases(spec, cases_from_log(train, schema), _attribute_kinds(schema), schema.target_activity)


def query_from_trace(trace: Trace, schema: LogSchema) -> Case:
    if not trace.events:
        raise ValueError("cannot predict for an empty prefix")
    return Case(trace.global_values(schema), tuple(trace.activities), tuple(trace.elapsed_minutes()))


def predict_total_time(learner: FittedLearner, prefix: Trace, schema: LogSchema | None = None) -> int:
    schema = schema or LogSchema(tuple(_schema_attrs(learner)))
    return learner.predict_total_time_case(query_from_trace(prefix, schema))


def predict_occurrence(
    learner: FittedLearner, prefix: Trace, target: str | None = None, schema: LogSchema | None = None
) -> bool:
    schema = schema or LogSchema(tuple(_schema_attrs(learner)))
    return learner.predict_occurrence_case(query_from_trace(prefix, schema), target)


def _schema_attrs(learner: FittedLearner):
    return [Attribute(name, NUMERIC if numeric else CATEGORICAL) for name, numeric in learner.attributes]
