from __future__ import annotations

from datetime import timezone

import numpy as np
import pytest

from helpers import T0, at, make_trace, random_log
from ppm_llm.errors import LogFormatError
from ppm_llm.event_log import (
    ACTIVITY_OCCURRENCE,
    CATEGORICAL,
    NUMERIC,
    Attribute,
    Event,
    LogSchema,
    Trace,
    kpi_value,
    load_csv,
    parse_timestamp,
    parse_value,
    prefixes,
    write_csv,
)

SCHEMA = LogSchema((Attribute("amount", NUMERIC), Attribute("kind", CATEGORICAL)))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_groups_and_sorts(tmp_path):
    p = _write(
        tmp_path / "log.csv",
        "case_id,activity,start_ts,end_ts,amount,kind\n"
        "c2,B,2024-01-01T00:10:00Z,2024-01-01T00:20:00Z,5,x\n"
        "c1,A,2024-01-01T01:00:00+01:00,,2.5,y\n"
        "c2,A,2024-01-01T00:00:00Z,2024-01-01T00:05:00Z,5,x\n",
    )
    log = load_csv(p, SCHEMA)
    assert [t.case_id for t in log.traces] == ["c2", "c1"]
    c2 = log.by_case()["c2"]
    assert c2.activities == ["A", "B"]
    c1 = log.by_case()["c1"].events[0]
    assert c1.t_start == T0 and c1.t_end == c1.t_start
    assert c1.attrs == {"amount": 2.5, "kind": "y"}
    assert c2.events[0].attrs["amount"] == 5 and isinstance(c2.events[0].attrs["amount"], int)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("case_id,activity,amount,kind\nc,A,1,x\n", "missing column 'start_ts'"),
        ("case_id,activity,start_ts,amount,kind,extra\nc,A,2024-01-01,1,x,0\n", "unknown attribute column 'extra'"),
        ("case_id,activity,start_ts,amount\nc,A,2024-01-01,1\n", "missing column 'kind'"),
        ("case_id,activity,start_ts,amount,kind\nc,A,yesterday,1,x\n", "row 2: unparseable timestamp"),
        ("case_id,activity,start_ts,amount,kind\nc,A,2024-01-01,abc,x\n", "row 2: unparseable numeric"),
        (
            "case_id,activity,start_ts,end_ts,amount,kind\nc,A,2024-01-02,2024-01-01,1,x\n",
            "row 2: end_ts precedes start_ts",
        ),
        (
            "case_id,activity,start_ts,amount,kind\nc,A,2024-01-01,1,x\nc,B,2024-01-02,2,x\n",
            "row 3: global attribute 'amount' varies",
        ),
    ],
)
def test_load_csv_errors(tmp_path, text, fragment):
    with pytest.raises(LogFormatError, match=fragment):
        load_csv(_write(tmp_path / "bad.csv", text), SCHEMA)


def test_csv_round_trip(tmp_path):
    log = random_log(np.random.default_rng(3), 25)
    write_csv(log, tmp_path / "out.csv")
    again = load_csv(tmp_path / "out.csv", log.schema)
    assert again.traces == log.traces


def test_timestamps_normalised_to_utc():
    assert parse_timestamp("2024-01-01T02:00:00+02:00") == T0
    assert parse_timestamp("2024-01-01T00:00:00Z") == T0
    assert parse_timestamp("2024-01-01T00:00:00").tzinfo == timezone.utc


def test_parse_value_kinds():
    assert parse_value("7", Attribute("n", NUMERIC)) == 7
    assert parse_value("7.0", Attribute("n", NUMERIC)) == 7.0
    assert parse_value("007", Attribute("c", CATEGORICAL)) == "007"
    with pytest.raises(ValueError):
        parse_value("inf", Attribute("n", NUMERIC))


def test_schema_validation():
    with pytest.raises(LogFormatError):
        LogSchema(kpi=ACTIVITY_OCCURRENCE)
    with pytest.raises(LogFormatError):
        LogSchema(target_activity="A")
    with pytest.raises(LogFormatError):
        LogSchema((Attribute("a"), Attribute("a")))
    with pytest.raises(LogFormatError):
        Attribute("a", "text")
    with pytest.raises(LogFormatError):
        Event("A", at(5), at(1))


def test_elapsed_uses_running_maximum_of_end_times():
    # the second event overlaps and ends before the first one
    t = make_trace("c", [("A", 0, 100), ("B", 10, 50), ("C", 120, 130.9)])
    assert t.elapsed_minutes() == [100, 100, 130]
    assert kpi_value(t, LogSchema()) == 130
    assert kpi_value(t, LogSchema(kpi=ACTIVITY_OCCURRENCE, target_activity="B")) is True
    assert kpi_value(t, LogSchema(kpi=ACTIVITY_OCCURRENCE, target_activity="Z")) is False


def test_prefixes_and_sorting():
    t = Trace.sorted("c", [Event("B", at(5), at(6)), Event("A", at(0), at(1))])
    assert t.activities == ["A", "B"]
    assert [len(p) for p in prefixes(t)] == [0, 1, 2]
    assert t.completion == at(6)
