"""Generator for the small loan-handling log bundled with the package."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path

from .event_log import (
    ACTIVITY_OCCURRENCE,
    CATEGORICAL,
    GLOBAL,
    NUMERIC,
    TOTAL_TIME,
    Attribute,
    Event,
    EventLog,
    LogSchema,
    Trace,
    write_csv,
)
from .split_sampler import make_rng

SUBMIT = "Submit application"
CHECK = "Check documents"
REQUEST = "Request missing documents"
ASSESS = "Assess risk"
APPROVE = "Approve offer"
NOTIFY = "Notify customer"
ACTIVITIES = (SUBMIT, CHECK, REQUEST, ASSESS, APPROVE, NOTIFY)

LOAN_TYPES = ("personal", "mortgage", "business")
_TYPE_SLOWDOWN = {"personal": 1.0, "mortgage": 1.8, "business": 1.4}
_REWORK_PROB = {"personal": 0.2, "mortgage": 0.45, "business": 0.35}


def synthetic_schema(kpi: str = TOTAL_TIME) -> LogSchema:
    return LogSchema(
        attributes=(
            Attribute("LOAN_TYPE", CATEGORICAL, GLOBAL),
            Attribute("AMOUNT", NUMERIC, GLOBAL),
        ),
        kpi=kpi,
        target_activity=REQUEST if kpi == ACTIVITY_OCCURRENCE else None,
        domain_background="The process handles consumer and business loan applications at a retail bank.",
        attribute_descriptions={
            "LOAN_TYPE": "the product line of the requested loan",
            "AMOUNT": "the amount of euros requested in the loan application",
        },
    )


def generate_log(n_traces: int = 300, seed: int = 2024, span_days: int = 40) -> EventLog:
    rng = make_rng(seed)
    schema = synthetic_schema()
    origin = datetime(2024, 1, 1, tzinfo=timezone.utc)
    traces = []
    for i in range(n_traces):
        loan_type = LOAN_TYPES[int(rng.integers(len(LOAN_TYPES)))]
        amount = float(500 * int(rng.integers(4, 81)))
        slow = _TYPE_SLOWDOWN[loan_type] * (1 + amount / 40000)
        attrs = {"LOAN_TYPE": loan_type, "AMOUNT": amount}
        path = [SUBMIT, CHECK]
        reworks = 0
        while reworks < 2 and rng.random() < _REWORK_PROB[loan_type] * (1 + amount / 80000):
            path += [REQUEST, CHECK]
            reworks += 1
        path.append(ASSESS)
        if rng.random() < 0.7:
            path.append(APPROVE)
        path.append(NOTIFY)

        t = origin + timedelta(minutes=int(rng.integers(0, span_days * 24 * 60)))
        events = []
        for step, act in enumerate(path):
            if step:
                gap = rng.exponential(600 * slow) + (1440 * slow if act == CHECK and step > 1 else 0)
                t += timedelta(minutes=int(gap))
            work = int(rng.integers(5, 60) * (3 if act == ASSESS else 1))
            end = t + timedelta(minutes=work)
            events.append(Event(act, t, end, dict(attrs)))
            t = end
        traces.append(Trace(f"Case_{i + 1:04d}", tuple(events)))
    return EventLog(tuple(traces), schema)


def bundled_path(name: str) -> Path:
    """Filesystem path of a file shipped in ``ppm_llm/data``."""
    return Path(str(resources.files("ppm_llm") / "data" / name))


def write_bundle(directory: str | Path) -> None:
    """Regenerate the bundled CSV next to its configs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_csv(generate_log(), directory / "synthetic_log.csv")
