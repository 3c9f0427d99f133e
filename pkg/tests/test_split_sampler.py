from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import at, check_split, make_trace, random_log
from ppm_llm.event_log import EventLog, LogSchema
from ppm_llm.split_sampler import (
    compute_t_split,
    make_rng,
    sample_training,
    sample_validation,
    temporal_split,
    truncate,
)


def test_compute_t_split_small_example():
    traces = [make_trace(f"c{i}", [("A", i * 10, i * 10 + 5)]) for i in range(10)]
    log = EventLog(tuple(traces), LogSchema())
    # 8 of 10 traces complete at the 8th completion time, minute 75
    assert compute_t_split(log, 0.8) == at(75)
    assert compute_t_split(log, 0.7) == at(65)
    assert compute_t_split(log, 1.0) == at(95)


def test_compute_t_split_errors():
    log = EventLog((), LogSchema())
    with pytest.raises(ValueError):
        compute_t_split(log)
    one = EventLog((make_trace("c", [("A", 0, 1)]),), LogSchema())
    with pytest.raises(ValueError):
        compute_t_split(one, 0)


def test_split_invariants_random_logs():
    rng = np.random.default_rng(11)
    for _ in range(60):
        log = random_log(rng, int(rng.integers(1, 30)))
        assert check_split(log, float(rng.choice([0.5, 0.8, 0.9]))) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 25), st.floats(0.05, 1.0))
def test_split_invariants_property(seed, n, fraction):
    log = random_log(np.random.default_rng(seed), n)
    assert check_split(log, fraction) == []


def test_truncate_skips_overlapping_tail():
    t = make_trace("c", [("A", 0, 10), ("B", 5, 50), ("C", 20, 30)])
    assert truncate(t, at(40)).activities == ["A"]
    assert truncate(t, at(60)).activities == ["A", "B", "C"]
    assert truncate(t, at(5)).activities == []


def test_empty_truncations_are_skipped():
    log = EventLog(
        (make_trace("a", [("A", 0, 10)]), make_trace("b", [("A", 20, 30)]), make_trace("c", [("A", 5, 100)])),
        LogSchema(),
    )
    res = temporal_split(log, at(10))
    assert [t.case_id for t in res.train.traces] == ["a"]
    assert res.skipped == ("b", "c")
    assert res.ground_truth() == {}
    rows = res.manifest_rows()
    assert ("b", "skipped", 0) in rows and ("a", "train", 1) in rows


def test_manifest_file(tmp_path):
    log = random_log(np.random.default_rng(2), 20)
    res = temporal_split(log, compute_t_split(log))
    res.write_manifest(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "case_id,bucket,truncation_length"
    assert len(lines) == 21


def test_sampling_is_seeded_and_without_replacement():
    log = random_log(np.random.default_rng(5), 40)
    a = sample_training(log, 15, seed=42)
    b = sample_training(log, 15, seed=42)
    c = sample_training(log, 15, seed=43)
    assert [t.case_id for t in a.traces] == [t.case_id for t in b.traces]
    assert [t.case_id for t in a.traces] != [t.case_id for t in c.traces]
    assert len({t.case_id for t in a.traces}) == 15
    # the sample of a larger size extends the smaller one
    assert [t.case_id for t in sample_training(log, 20, 42).traces][:15] == [t.case_id for t in a.traces]
    with pytest.raises(ValueError):
        sample_training(log, 41, 1)


def test_named_bit_generators_differ():
    draws = {name: make_rng(1, name).integers(0, 2**31, 4).tolist() for name in ("pcg64", "mt19937", "philox")}
    assert len({tuple(v) for v in draws.values()}) == 3
    with pytest.raises(ValueError):
        make_rng(1, "lcg")


def test_validation_split():
    log = random_log(np.random.default_rng(8), 21)
    keep, valid = sample_validation(log, 0.2, seed=3)
    assert len(valid) == 4 and len(keep) == 17
    ids = [t.case_id for t in log.traces]
    assert sorted(ids.index(t.case_id) for t in keep.traces) == [ids.index(t.case_id) for t in keep.traces]
    assert {t.case_id for t in keep.traces}.isdisjoint(t.case_id for t in valid.traces)
