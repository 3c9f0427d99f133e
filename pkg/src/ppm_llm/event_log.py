"""In-memory event-log model, CSV ingestion and prefix generation.

An event log is a multiset of traces and each trace is the time-ordered event
sequence of one case. Attributes are declared in a :class:`LogSchema` as either
global (constant within a trace) or local (free to vary per event).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import LogFormatError

TOTAL_TIME = "total_time"
ACTIVITY_OCCURRENCE = "activity_occurrence"
KPIS = (TOTAL_TIME, ACTIVITY_OCCURRENCE)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
GLOBAL = "global"
LOCAL = "local"

REQUIRED_COLUMNS = ("case_id", "activity", "start_ts")
_INT_RE = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class Attribute:
    name: str
    value_type: str = CATEGORICAL
    scope: str = GLOBAL

    def __post_init__(self) -> None:
        if self.value_type not in (NUMERIC, CATEGORICAL):
            raise LogFormatError(f"attribute {self.name!r}: unknown value type {self.value_type!r}")
        if self.scope not in (GLOBAL, LOCAL):
            raise LogFormatError(f"attribute {self.name!r}: unknown scope {self.scope!r}")

    @property
    def is_global(self) -> bool:
        return self.scope == GLOBAL

    @property
    def is_numeric(self) -> bool:
        return self.value_type == NUMERIC


@dataclass(frozen=True)
class LogSchema:
    """Attribute declarations plus the KPI to predict.

    ``target_activity`` must be given exactly when the KPI is activity
    occurrence. ``domain_background`` and ``attribute_descriptions`` are the
    optional analyst-provided prompt lines.
    """

    attributes: tuple[Attribute, ...] = ()
    kpi: str = TOTAL_TIME
    target_activity: str | None = None
    domain_background: str | None = None
    attribute_descriptions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if self.kpi not in KPIS:
            raise LogFormatError(f"unknown KPI {self.kpi!r}; expected one of {KPIS}")
        if (self.kpi == ACTIVITY_OCCURRENCE) != (self.target_activity is not None):
            raise LogFormatError("target_activity is required for activity_occurrence and only for it")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise LogFormatError("duplicate attribute names in schema")
        unknown = set(self.attribute_descriptions) - set(names)
        if unknown:
            raise LogFormatError(f"descriptions given for undeclared attributes: {sorted(unknown)}")

    @property
    def attribute_names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def global_attributes(self) -> list[Attribute]:
        return [a for a in self.attributes if a.is_global]

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)


@dataclass(frozen=True)
class Event:
    activity: str
    t_start: datetime
    t_end: datetime
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.t_end < self.t_start:
            raise LogFormatError(f"event {self.activity!r} ends before it starts")

    @property
    def duration_minutes(self) -> int:
        return math.floor((self.t_end - self.t_start).total_seconds() / 60)


def _event_order(e: Event) -> tuple:
    return (e.t_start, e.t_end, e.activity)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    @classmethod
    def sorted(cls, case_id: str, events: Iterable[Event]) -> "Trace":
        return cls(case_id, tuple(sorted(events, key=_event_order)))

    @property
    def activities(self) -> list[str]:
        return [e.activity for e in self.events]

    @property
    def start(self) -> datetime:
        return self.events[0].t_start

    @property
    def completion(self) -> datetime:
        """Time at which every event of the trace has finished."""
        return max(e.t_end for e in self.events)

    def prefix(self, n: int) -> "Trace":
        return Trace(self.case_id, self.events[:n])

    def global_values(self, schema: LogSchema) -> dict[str, Any]:
        if not self.events:
            return {}
        first = self.events[0].attrs
        return {a.name: first.get(a.name) for a in schema.global_attributes}

    def elapsed_minutes(self) -> list[int]:
        """Cumulative elapsed minutes from the trace start, one per event.

        Entry i is measured to the latest end time among events 1..i, floored
        to whole minutes, so the sequence never decreases even when events
        overlap and its last entry is the total time of a completed trace.
        """
        if not self.events:
            return []
        t0 = self.events[0].t_start
        out = []
        latest = self.events[0].t_end
        for e in self.events:
            if e.t_end > latest:
                latest = e.t_end
            out.append(math.floor((latest - t0).total_seconds() / 60))
        return out


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    schema: LogSchema

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def alphabet(self) -> list[str]:
        return sorted({e.activity for t in self.traces for e in t.events})

    def by_case(self) -> dict[str, Trace]:
        return {t.case_id: t for t in self.traces}

    def subset(self, traces: Sequence[Trace]) -> "EventLog":
        return EventLog(tuple(traces), self.schema)


def prefixes(trace: Trace) -> list[Trace]:
    """All prefixes of ``trace`` in length order, from the empty one to the trace itself."""
    return [trace.prefix(n) for n in range(len(trace) + 1)]


def kpi_value(trace: Trace, schema: LogSchema) -> int | bool:
    """KPI of a completed trace: total minutes, or whether the target activity occurs."""
    if not trace.events:
        raise ValueError(f"trace {trace.case_id!r} is empty")
    if schema.kpi == TOTAL_TIME:
        return math.floor((trace.completion - trace.start).total_seconds() / 60)
    return schema.target_activity in trace.activities


def parse_timestamp(text: str) -> datetime:
    """Parse ISO-8601, normalising to UTC. Naive timestamps are taken as UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_value(text: str, attribute: Attribute) -> Any:
    if attribute.value_type == CATEGORICAL:
        return text
    s = text.strip()
    if _INT_RE.match(s):
        return int(s)
    value = float(s)
    if not math.isfinite(value):
        raise ValueError(f"non-finite numeric value {text!r}")
    return value


def load_csv(path: str | Path, schema: LogSchema) -> EventLog:
    """Read an event log from CSV.

    Columns ``case_id``, ``activity`` and ``start_ts`` are required; ``end_ts``
    is optional and an empty or missing end time is set to the start time.
    Every other column must be a schema attribute, and every schema attribute
    must be present. Traces keep the order of their first appearance.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise LogFormatError(f"missing column {col!r}", row=1)
        known = set(REQUIRED_COLUMNS) | {"end_ts"}
        declared = set(schema.attribute_names)
        for col in header:
            if col not in known and col not in declared:
                raise LogFormatError(f"unknown attribute column {col!r}", row=1)
        for name in schema.attribute_names:
            if name not in header:
                raise LogFormatError(f"missing column {name!r}", row=1)

        grouped: dict[str, list[Event]] = {}
        first_seen: dict[str, dict[str, tuple[Any, int]]] = {}
        for rowno, row in enumerate(reader, start=2):
            case_id = row["case_id"]
            if not case_id:
                raise LogFormatError("empty case_id", row=rowno)
            try:
                t_start = parse_timestamp(row["start_ts"])
            except (ValueError, TypeError):
                raise LogFormatError(f"unparseable timestamp {row['start_ts']!r}", row=rowno) from None
            raw_end = row.get("end_ts") or ""
            try:
                t_end = parse_timestamp(raw_end) if raw_end.strip() else t_start
            except ValueError:
                raise LogFormatError(f"unparseable timestamp {raw_end!r}", row=rowno) from None
            if t_end < t_start:
                raise LogFormatError(f"end_ts precedes start_ts in case {case_id!r}", row=rowno)
            attrs: dict[str, Any] = {}
            for attribute in schema.attributes:
                raw = row[attribute.name]
                if raw is None:
                    raise LogFormatError(f"missing value for {attribute.name!r}", row=rowno)
                try:
                    attrs[attribute.name] = parse_value(raw, attribute)
                except ValueError:
                    raise LogFormatError(
                        f"unparseable numeric value {raw!r} for {attribute.name!r}", row=rowno
                    ) from None
            seen = first_seen.setdefault(case_id, {})
            for attribute in schema.global_attributes:
                value = attrs[attribute.name]
                if attribute.name not in seen:
                    seen[attribute.name] = (value, rowno)
                elif seen[attribute.name][0] != value:
                    raise LogFormatError(
                        f"global attribute {attribute.name!r} varies within case {case_id!r} "
                        f"({seen[attribute.name][0]!r} at row {seen[attribute.name][1]}, {value!r})",
                        row=rowno,
                    )
            grouped.setdefault(case_id, []).append(Event(row["activity"], t_start, t_end, attrs))

    traces = tuple(Trace.sorted(cid, events) for cid, events in grouped.items())
    return EventLog(traces, schema)


def write_csv(log: EventLog, path: str | Path) -> None:
    """Write ``log`` in the format :func:`load_csv` reads."""
    names = log.schema.attribute_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "activity", "start_ts", "end_ts", *names])
        for trace in log.traces:
            for e in trace.events:
                writer.writerow(
                    [trace.case_id, e.activity, e.t_start.isoformat(), e.t_end.isoformat()]
                    + [e.attrs[n] for n in names]
                )
