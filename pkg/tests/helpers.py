"""Builders shared by the test modules."""

from __future__ import annotations

import math
from collections import Counter
from datetime import datetime, timedelta, timezone

import numpy as np

from ppm_llm.config import ExperimentConfig, parse_config
from ppm_llm.event_log import (
    ACTIVITY_OCCURRENCE,
    CATEGORICAL,
    NUMERIC,
    TOTAL_TIME,
    Attribute,
    Event,
    EventLog,
    LogSchema,
    Trace,
)
from ppm_llm.split_sampler import compute_t_split, temporal_split
from ppm_llm.synthetic import bundled_path

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)


def at(minutes: float) -> datetime:
    return T0 + timedelta(minutes=minutes)


def make_trace(case_id: str, steps, attrs=None, offset: float = 0) -> Trace:
    """``steps`` holds (activity, start_minute, end_minute) tuples relative to ``offset``."""
    attrs = attrs or {}
    return Trace(case_id, tuple(Event(a, at(offset + s), at(offset + e), dict(attrs)) for a, s, e in steps))


def listing_schema() -> LogSchema:
    return LogSchema(
        (Attribute("AMOUNT_REQ", NUMERIC),),
        attribute_descriptions={"AMOUNT_REQ": "the total amount of euros requested in the loan application"},
        domain_background=(
            "The process deals with a loan application process from a Dutch financial institution. "
            "It has been provided\nin the Business Process Intelligence (BPI) challenge in 2012."
        ),
    )


def listing_traces():
    first = make_trace(
        "A1",
        [("W_Completeren aanvraag", 0, 11), ("W_Nabellen offertes", 1400, 1464), ("W_Nabellen offertes", 7000, 7486)],
        {"AMOUNT_REQ": 5000.0},
    )
    second = make_trace(
        "A2",
        [
            ("W_Completeren aanvraag", 0, 13),
            ("W_Nabellen offertes", 13, 14),
            ("W_Validate application", 4000, 4328),
            ("W_Validate application", 8000, 8792),
        ],
        {"AMOUNT_REQ": 15000.0},
    )
    running = make_trace(
        "Application_1000386745",
        [("W_Completeren aanvraag", 0, 2), ("W_Nabellen offertes", 8000, 8571)],
        {"AMOUNT_REQ": 18000.0},
    )
    return first, second, running


ACTS = ("A", "B", "C", "D", "E")


def random_log(rng: np.random.Generator, n_traces: int, kpi: str = TOTAL_TIME, overlap: bool = True) -> EventLog:
    """Small random log with one numeric and one categorical global attribute."""
    schema = LogSchema(
        (Attribute("amount", NUMERIC), Attribute("kind", CATEGORICAL)),
        kpi=kpi,
        target_activity="C" if kpi == ACTIVITY_OCCURRENCE else None,
    )
    traces = []
    for i in range(n_traces):
        attrs = {"amount": float(rng.integers(1, 50) * 100), "kind": str(rng.choice(["x", "y", "z"]))}
        t = float(rng.integers(0, 5000))
        events = []
        for _ in range(int(rng.integers(1, 7))):
            start = t + float(rng.integers(0, 300))
            end = start + float(rng.integers(0, 200))
            events.append(Event(str(rng.choice(ACTS)), at(start), at(end), dict(attrs)))
            t = start if overlap and rng.random() < 0.3 else end
        traces.append(Trace.sorted(f"c{i:03d}", events))
    return EventLog(tuple(traces), schema)


def knn_oracle(family: str, train: EventLog, prefix: Trace, k: int) -> list[int]:
    """Exhaustive scan: the ``k`` training traces closest to ``prefix``, ties to lower index."""
    schema = train.schema
    q_acts = Counter(prefix.activities)
    q_elapsed = prefix.elapsed_minutes()
    q_globals = prefix.global_values(schema)
    attrs = [(a.name, a.value_type != CATEGORICAL) for a in schema.global_attributes]
    spans = {}
    for name, numeric in attrs:
        if numeric:
            vals = [t.global_values(schema)[name] for t in train.traces]
            vals = [float(v) for v in vals if v is not None]
            spans[name] = max(vals) - min(vals) if vals else 0.0

    def dist(trace: Trace) -> float:
        if family in ("knn_act", "activity_based"):
            c = Counter(trace.activities)
            return math.sqrt(sum((c[a] - q_acts[a]) ** 2 for a in set(c) | set(q_acts)))
        if family in ("knn_att", "att_based"):
            if not attrs:
                return 0.0
            g = trace.global_values(schema)
            total = 0.0
            for name, numeric in attrs:
                v, q = g.get(name), q_globals.get(name)
                if numeric:
                    total += abs(float(v) - float(q)) / spans[name] if spans[name] > 0 and None not in (v, q) else 0.0
                else:
                    total += 0.0 if v == q else 1.0
            return total / len(attrs)
        if family == "time_seq":
            e = trace.elapsed_minutes()
            m = min(len(e), len(q_elapsed))
            return math.sqrt(sum((e[j] - q_elapsed[j]) ** 2 for j in range(m))) / m if m else math.inf
        raise ValueError(family)

    d = [dist(t) for t in train.traces]
    return sorted(range(len(d)), key=lambda i: (d[i], i))[: min(k, len(d))]


def small_config(tmp_path, **experiment) -> ExperimentConfig:
    """Two-repetition echo experiment on the bundled log, recording into ``tmp_path``."""
    exp = {
        "name": "small",
        "log_path": str(bundled_path("synthetic_log.csv")),
        "n_train": 20,
        "repetitions": 2,
        "convergence_grid": [5, 50],
        "output_dir": str(tmp_path / "out"),
    }
    exp.update(experiment.pop("experiment", {}))
    raw = {
        "experiment": exp,
        "schema": {"attributes": [{"name": "LOAN_TYPE"}, {"name": "AMOUNT", "type": "numeric"}]},
        "llm": {"adapter": "echo", "model_name": "echo", "echo_learner": "knn_act_median", "mode": "record"},
        "learners": [
            {"family": "knn_act", "aggregation": "median"},
            {"family": "path_pred", "aggregation": "mean"},
        ],
    }
    raw.update(experiment)
    return parse_config(raw, base_dir=tmp_path)


def check_split(log: EventLog, fraction: float) -> list[str]:
    """Every broken invariant of the split at ``compute_t_split(fraction)``."""
    problems = []
    t = compute_t_split(log, fraction)
    completions = sorted(tr.completion for tr in log.traces)
    needed = fraction * len(log)
    done = sum(c <= t for c in completions)
    if done < needed - 1e-9:
        problems.append("fraction not reached")
    earlier = [c for c in completions if c < t]
    if len(earlier) >= needed - 1e-9:
        problems.append("not minimal")
    res = temporal_split(log, t)
    train_ids = {x.case_id for x in res.train.traces}
    test_ids = {x.case_id for x in res.test_completed.traces}
    if train_ids & test_ids or train_ids | test_ids != {x.case_id for x in log.traces}:
        problems.append("not a partition")
    if any(x.completion > t for x in res.train.traces):
        problems.append("train trace after t_split")
    full = log.by_case()
    for prefix in res.test_truncated.traces:
        whole = full[prefix.case_id]
        if prefix.events != whole.events[: len(prefix)]:
            problems.append("truncation is not a prefix")
        if any(e.t_end > t for e in prefix.events):
            problems.append("post-split event in truncation")
        if len(prefix) < len(whole) and whole.events[len(prefix)].t_end <= t:
            problems.append("truncation not maximal")
    truncated = {x.case_id for x in res.test_truncated.traces}
    if truncated | set(res.skipped) != test_ids or truncated & set(res.skipped):
        problems.append("truncated and skipped do not cover the test set")
    return problems
