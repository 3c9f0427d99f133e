from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import listing_schema, listing_traces, make_trace, random_log
from ppm_llm.encoding import (
    OTHER_COLUMN,
    count_columns,
    decode_seq,
    encode_aggr,
    encode_seq,
    write_aggregated_csv,
)
from ppm_llm.errors import EncodingParseError
from ppm_llm.event_log import ACTIVITY_OCCURRENCE, CATEGORICAL, NUMERIC, Attribute, LogSchema, kpi_value


def test_listing_examples():
    first, second, running = listing_traces()
    schema = listing_schema()
    assert encode_seq(first, schema, False).payload == (
        '{"AMOUNT_REQ": 5000.0, "ActTimeSeq": [["W_Completeren aanvraag", 11], '
        '["W_Nabellen offertes", 1464], ["W_Nabellen offertes", 7486]], "total_time": "7486"}'
    )
    enc = encode_seq(running, schema, True)
    assert enc.is_running
    assert enc.payload == (
        '{"AMOUNT_REQ": 18000.0, "ActTimeSeq": [["W_Completeren aanvraag", 2], '
        '["W_Nabellen offertes", 8571], ["Running"]]}'
    )
    assert "total_time" not in enc.payload


def test_occurrence_kpi_rendered_as_yes_no():
    schema = LogSchema(kpi=ACTIVITY_OCCURRENCE, target_activity="B")
    assert encode_seq(make_trace("c", [("A", 0, 1), ("B", 2, 3)]), schema, False).payload.endswith(
        '"activity_occurrence": "yes"}'
    )
    assert encode_seq(make_trace("c", [("A", 0, 1)]), schema, False).payload.endswith('"activity_occurrence": "no"}')


def test_categorical_and_integer_values():
    schema = LogSchema((Attribute("kind", CATEGORICAL), Attribute("n", NUMERIC)))
    t = make_trace("c", [("A", 0, 1)], {"kind": "gold \"plus\"", "n": 3})
    payload = encode_seq(t, schema, False).payload
    assert payload.startswith('{"kind": "gold \\"plus\\"", "n": 3, ')
    assert decode_seq(payload).globals == {"kind": 'gold "plus"', "n": 3}


def _round_trip(trace, schema, running):
    dec = decode_seq(encode_seq(trace, schema, running).payload)
    assert dec.is_running is running
    assert dec.activities == trace.activities
    assert dec.elapsed == trace.elapsed_minutes()
    assert dec.globals == trace.global_values(schema)
    if not running:
        assert dec.kpi == str(kpi_value(trace, schema))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_decode_inverts_encode(seed, running):
    log = random_log(np.random.default_rng(seed), 5)
    for trace in log.traces:
        _round_trip(trace, log.schema, running)


@pytest.mark.parametrize(
    "payload",
    [
        "",
        "[1, 2]",
        '{"a": 1}',
        '{"ActTimeSeq": []}',
        '{"ActTimeSeq": [["A", "x"]]}',
        '{"ActTimeSeq": [["A", 1]], "x": 2}',
        '{"ActTimeSeq": [["A", 1], ["Running"]], "total_time": "3"}',
        '{"ActTimeSeq": [["A", 1]], "total_time": 3}',
        '{"ActTimeSeq": [["A", 1]]\n}',
        '{"ActTimeSeq": [["A", 1]',
    ],
)
def test_decode_rejects_malformed(payload):
    with pytest.raises(EncodingParseError) as info:
        decode_seq(payload)
    assert info.value.pos >= 0


def test_aggregated_encoding(tmp_path):
    schema = LogSchema((Attribute("n", NUMERIC),))
    t = make_trace("c", [("A", 0, 1), ("B", 2, 3), ("A", 4, 10), ("Z", 11, 12)], {"n": 2.0})
    enc = encode_aggr(t, schema, ["A", "B", "C"])
    assert enc.payload == {
        "n": 2.0,
        "act_count_A": 2,
        "act_count_B": 1,
        "act_count_C": 0,
        OTHER_COLUMN: 1,
        "total_time": 12,
    }
    assert sum(count_columns(enc.payload).values()) == len(t)
    running = encode_aggr(t.prefix(2), schema, ["A", "B", "C"], running=True)
    assert "total_time" not in running.payload
    write_aggregated_csv([enc, running], tmp_path / "a.csv")
    rows = list(csv.DictReader((tmp_path / "a.csv").open()))
    assert rows[0]["act_count_A"] == "2" and rows[1]["total_time"] == ""


def test_encode_empty_trace_fails():
    with pytest.raises(ValueError):
        encode_seq(make_trace("c", []), LogSchema(), False)
