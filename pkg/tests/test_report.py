from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from helpers import small_config
from ppm_llm.report import SUMMARY_COLUMNS, format_delta, format_metric, render_report, summary_header, summary_rows
from ppm_llm.runner import run


@pytest.fixture(scope="module")
def one_learner(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("report")
    cfg = small_config(
        tmp,
        experiment={"repetitions": 3, "hashed": False},
        learners=[{"family": "knn_act", "aggregation": "median", "params": {"scale": 1.5}}],
    )
    report = run(cfg)
    out = tmp / "report"
    files = render_report(report, out, mode="record")
    return report, out, files


def _md_rows(text):
    lines = text.split("\n\n")[2].splitlines()
    return [[c.strip() for c in line.strip("|").split("|")] for line in lines]


def test_one_learner_gives_two_rows(one_learner):
    report, out, _ = one_learner
    rows = summary_rows(report)
    assert len(rows) == 2
    assert summary_header(report) == [c.format(n=20) for c in SUMMARY_COLUMNS]
    llm, learner = rows
    assert llm[2] == "no" and llm[3] == "-" and llm[6] == "-" and llm[8] == "-"
    assert learner[1] == "knn act median x1.5" and learner[6] in ("*", "**", "***", "ns")


def test_sigma_matches_per_run_csv(one_learner):
    report, out, _ = one_learner
    per_run = list(csv.DictReader((out / "metrics_per_run.csv").open()))
    for pid in ("llm", "knn_act_median_x1.5"):
        vals = [float(r["value"]) for r in per_run if r["predictor"] == pid]
        assert len(vals) == 3
        mean, std = report.aggregates[pid]
        assert std == pytest.approx(np.std(vals, ddof=1), abs=1e-9)
        assert mean == pytest.approx(np.mean(vals), abs=1e-9)


def test_csv_and_markdown_agree(one_learner):
    _, out, _ = one_learner
    with (out / "summary.csv").open(newline="", encoding="utf-8") as fh:
        csv_rows = list(csv.reader(fh))
    md_rows = _md_rows((out / "report.md").read_text(encoding="utf-8"))
    assert csv_rows[0] == md_rows[0]
    assert csv_rows[1:] == md_rows[2:]


def test_manifest_lists_files(one_learner):
    _, out, files = one_learner
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["mode"] == "record" and manifest["seeds"] == [1, 2, 3]
    assert set(manifest["files"]) == {p.name for p in files[:-1]}
    assert {"config_digest", "log_digest", "prompt_digest", "cache_digest"} <= set(manifest["inputs"])
    report_again = json.loads((out / "report.json").read_text())
    assert summary_rows(report_again) == summary_rows(one_learner[0])


def test_formatting():
    assert format_metric(1234.5678, "total_time") == "1235"
    assert format_metric(0.6666, "activity_occurrence") == "0.67"
    assert format_metric(None, "total_time") == "-"
    assert format_delta(12.4, "total_time") == "12%"
    assert format_delta(-0.051, "activity_occurrence") == "-0.05"


def test_unknown_format(tmp_path, one_learner):
    with pytest.raises(ValueError):
        render_report(one_learner[0], tmp_path, formats=("html",))
