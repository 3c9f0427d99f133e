"""Trace-to-instance encodings: the sequential string and the aggregated count row.

The sequential payload is a single-line object literal::

    {"AMOUNT_REQ": 5000.0, "ActTimeSeq": [["A", 11], ["B", 1464]], "total_time": "1464"}

Global attributes come first in schema order, then ``ActTimeSeq`` with one
``[activity, cumulative elapsed minutes]`` pair per event, then the KPI as a
quoted string. Running instances omit the KPI and close ``ActTimeSeq`` with
``["Running"]``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Sequence

from .errors import EncodingParseError
from .event_log import ACTIVITY_OCCURRENCE, TOTAL_TIME, LogSchema, Trace, kpi_value

SEQUENCE_KEY = "ActTimeSeq"
RUNNING = "Running"
OTHER_COLUMN = "act_count_OTHER"
KPI_KEYS = {TOTAL_TIME: "total_time", ACTIVITY_OCCURRENCE: "activity_occurrence"}


@dataclass(frozen=True)
class EncodedInstance:
    kind: str
    payload: Any
    is_running: bool
    case_id: str


class DecodedInstance(NamedTuple):
    globals: dict[str, Any]
    steps: list[tuple[str, int]]
    kpi: str | None
    is_running: bool

    @property
    def activities(self) -> list[str]:
        return [a for a, _ in self.steps]

    @property
    def elapsed(self) -> list[int]:
        return [m for _, m in self.steps]


def format_kpi(value: int | bool) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    return str(int(value))


def _dumps(value: Any) -> str:
    return json.dumps(value, ensure_ascii=False, allow_nan=False)


def encode_seq(trace: Trace, schema: LogSchema, running: bool) -> EncodedInstance:
    if not trace.events:
        raise ValueError(f"cannot encode empty trace {trace.case_id!r}")
    parts = [f"{_dumps(name)}: {_dumps(value)}" for name, value in trace.global_values(schema).items()]
    steps = [[a, m] for a, m in zip(trace.activities, trace.elapsed_minutes())]
    if running:
        steps.append([RUNNING])
    parts.append(f"{_dumps(SEQUENCE_KEY)}: {_dumps(steps)}")
    if not running:
        parts.append(f"{_dumps(KPI_KEYS[schema.kpi])}: {_dumps(format_kpi(kpi_value(trace, schema)))}")
    return EncodedInstance("sequential", "{" + ", ".join(parts) + "}", running, trace.case_id)


def decode_seq(payload: str) -> DecodedInstance:
    """Parse a sequential payload back into its parts.

    Raises :class:`EncodingParseError` carrying the offending character offset.
    """
    if "\n" in payload:
        raise EncodingParseError("payload must be a single line", payload.index("\n"))
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise EncodingParseError(exc.msg, exc.pos) from None
    if not isinstance(obj, dict):
        raise EncodingParseError("payload must be an object literal", 0)

    def pos_of(key: str) -> int:
        idx = payload.find(_dumps(key))
        return idx if idx >= 0 else 0

    if SEQUENCE_KEY not in obj:
        raise EncodingParseError(f"missing {SEQUENCE_KEY!r} key", max(len(payload) - 1, 0))
    keys = list(obj)
    seq_at = keys.index(SEQUENCE_KEY)
    tail = keys[seq_at + 1:]
    kpi_keys = set(KPI_KEYS.values())
    if len(tail) > 1 or (tail and tail[0] not in kpi_keys):
        raise EncodingParseError(f"unexpected key after {SEQUENCE_KEY!r}", pos_of(tail[-1]))
    raw_steps = obj[SEQUENCE_KEY]
    if not isinstance(raw_steps, list):
        raise EncodingParseError(f"{SEQUENCE_KEY!r} must be a list", pos_of(SEQUENCE_KEY))
    running = bool(raw_steps) and raw_steps[-1] == [RUNNING]
    if running:
        raw_steps = raw_steps[:-1]
    steps: list[tuple[str, int]] = []
    for step in raw_steps:
        ok = (
            isinstance(step, list)
            and len(step) == 2
            and isinstance(step[0], str)
            and isinstance(step[1], int)
            and not isinstance(step[1], bool)
        )
        if not ok:
            raise EncodingParseError(f"malformed step {step!r}", pos_of(SEQUENCE_KEY))
        steps.append((step[0], step[1]))
    if not steps:
        raise EncodingParseError(f"{SEQUENCE_KEY!r} has no events", pos_of(SEQUENCE_KEY))
    kpi = None
    if tail:
        kpi = obj[tail[0]]
        if running:
            raise EncodingParseError("running instance carries a KPI value", pos_of(tail[0]))
        if not isinstance(kpi, str):
            raise EncodingParseError("KPI value must be a quoted string", pos_of(tail[0]))
    globals_ = {k: obj[k] for k in keys[:seq_at]}
    return DecodedInstance(globals_, steps, kpi, running)


def encode_aggr(
    trace: Trace, schema: LogSchema, alphabet: Sequence[str], running: bool = False
) -> EncodedInstance:
    """Global attributes, one ``act_count_<activity>`` column per alphabet entry, KPI.

    Activities outside ``alphabet`` are counted under ``act_count_OTHER``.
    """
    known = set(alphabet)
    row: dict[str, Any] = dict(trace.global_values(schema))
    counts = {a: 0 for a in alphabet}
    other = 0
    for act in trace.activities:
        if act in known:
            counts[act] += 1
        else:
            other += 1
    for act in alphabet:
        row[f"act_count_{act}"] = counts[act]
    row[OTHER_COLUMN] = other
    if not running:
        row[KPI_KEYS[schema.kpi]] = kpi_value(trace, schema)
    return EncodedInstance("aggregated", row, running, trace.case_id)


def count_columns(row: Mapping[str, Any]) -> dict[str, int]:
    return {k: v for k, v in row.items() if k.startswith("act_count_")}


def write_aggregated_csv(instances: Sequence[EncodedInstance], path: str | Path) -> None:
    columns: list[str] = ["case_id"]
    for inst in instances:
        for key in inst.payload:
            if key not in columns:
                columns.append(key)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        for inst in instances:
            writer.writerow({"case_id": inst.case_id, **inst.payload})
