"""Markdown and CSV renderings of an experiment report.

Everything is rendered from the JSON form of the report so that
``ppm-llm report`` can redraw the tables from a stored ``report.json``. The
summary table has the same cells in both formats.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping

from .event_log import TOTAL_TIME
from .stats.friedman import significance_stars

FORMATS = ("markdown", "csv")
SUMMARY_COLUMNS = ("Use Case", "Model", "hash", "all_df", "{n} ±", "#best", "Significance", "Occurrence", "ΔLLM")


def _as_dict(report) -> dict[str, Any]:
    return report if isinstance(report, Mapping) else report.to_dict()


def format_metric(value: float | None, kpi: str) -> str:
    if value is None:
        return "-"
    return f"{value:.0f}" if kpi == TOTAL_TIME else f"{value:.2f}"


def format_delta(value: float | None, kpi: str) -> str:
    if value is None:
        return "-"
    return f"{value:.0f}%" if kpi == TOTAL_TIME else f"{value:.2f}"


def _stars(test: Mapping[str, Any] | None) -> str:
    if test is None:
        return "-"
    return significance_stars(test["p_value"])


def _nemenyi_pair_p(report: Mapping[str, Any]) -> float | None:
    nem = report.get("nemenyi")
    if not nem:
        return None
    pairs = (nem.get("extra") or {}).get("pairs")
    return pairs[0]["p_value"] if pairs else nem["p_value"]


def summary_header(report) -> list[str]:
    r = _as_dict(report)
    return [c.format(n=r["n_train"]) for c in SUMMARY_COLUMNS]


def summary_rows(report) -> list[list[str]]:
    """One row per predictor, in the column order of :data:`SUMMARY_COLUMNS`."""
    r = _as_dict(report)
    kpi = r["kpi"]
    rows = []
    for p in r["predictors"]:
        pid = p["id"]
        agg = r["aggregates"][pid]
        if p["kind"] == "llm":
            hash_cell = "yes" if p["hashed"] else "no"
            if p["hashed"]:
                pair_p = _nemenyi_pair_p(r)
                signif = "-" if pair_p is None else significance_stars(pair_p)
            else:
                signif = "-"
        else:
            hash_cell = "-"
            signif = _stars(r["tests"].get(pid))
        best = r["best"].get(pid)
        occurrence = r["occurrence"].get(pid)
        rows.append(
            [
                r["name"],
                p["label"],
                hash_cell,
                format_metric(r["all_df"].get(pid), kpi),
                f"{format_metric(agg['mean'], kpi)} ± {format_metric(agg['std'], kpi)}",
                "-" if best is None else str(best),
                signif,
                "-" if occurrence is None else str(occurrence),
                format_delta(r["delta_llm"].get(pid), kpi),
            ]
        )
    return rows


def _md_table(header: list[str], rows: Iterable[list[Any]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines)


def _write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(x: Any) -> str:
    return "" if x is None else repr(x) if isinstance(x, float) else str(x)


def stats_rows(report) -> list[list[str]]:
    r = _as_dict(report)
    rows = []
    for pid, t in r["tests"].items():
        rows.append([f"{r['predictors'][0]['id']} vs {pid}", t["test"], _num(t["statistic"]), _num(t["p_value"]),
                     _num(t["alpha"]), t["decision"], str(t["n"]), t["method"], significance_stars(t["p_value"])])
    nem = r.get("nemenyi")
    if nem:
        rows.append(["llm vs llm_hashed", nem["test"], _num(nem["statistic"]), _num(nem["p_value"]),
                     _num(nem["alpha"]), nem["decision"], str(nem["n"]), nem["method"],
                     significance_stars(_nemenyi_pair_p(r))])
    return rows


STATS_HEADER = ["comparison", "test", "statistic", "p_value", "alpha", "decision", "n", "method", "stars"]


def good_turing_rows(report) -> list[list[str]]:
    gt = _as_dict(report).get("good_turing")
    if not gt:
        return []
    return [[m, _num(v)] for m, v in gt["expected_novel"].items()]


def render_markdown(report) -> str:
    r = _as_dict(report)
    kpi_name = "MAE (minutes)" if r["kpi"] == TOTAL_TIME else "F1-Score"
    parts = [
        f"# {r['name']}: {kpi_name}",
        "",
        f"Training sample of {r['n_train']} traces, {len(r['runs'])} repetitions, alpha = {r['alpha']}, "
        f"paired by {r['pairing']}.",
        "",
        _md_table(summary_header(r), summary_rows(r)),
        "",
        "## Statistical tests",
        "",
        _md_table(STATS_HEADER, stats_rows(r)),
    ]
    nem = r.get("nemenyi")
    if nem and nem.get("extra") and "critical_difference" in nem["extra"]:
        ex = nem["extra"]
        ranks = ", ".join(f"{x:.4f}" for x in ex["mean_ranks"])
        parts += ["", f"Nemenyi: mean ranks [{ranks}], critical difference {ex['critical_difference']:.4f}."]
    gt = r.get("good_turing")
    parts += ["", "## Novel pattern discovery (Good-Turing)", ""]
    if gt:
        parts += [
            f"N = {gt['N']}, N_1 = {gt['N_r'].get('1', 0)}, P_0 = {gt['p0']:.4f}.",
            "",
            _md_table(["m", "expected novel"], [[m, f"{v:.4f}"] for m, v in gt["expected_novel"].items()]),
            "",
            _md_table(["family", "count"], [[k, v] for k, v in gt["counts"].items()]),
        ]
    else:
        parts.append("No reasoning was assigned to a pattern family.")
    failures = [(run["repetition"], *f) for run in r["runs"] for f in run["failures"]]
    parts += ["", "## Failed instances", ""]
    if failures:
        parts.append(_md_table(["repetition", "predictor", "case_id", "reason"], failures))
    else:
        parts.append("None.")
    parts += ["", "## Provenance", "", _md_table(["key", "value"], [[k, v] for k, v in r["provenance"].items()])]
    return "\n".join(parts) + "\n"


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def render_report(report, out_dir: str | Path, formats: Iterable[str] = FORMATS, mode: str | None = None) -> list[Path]:
    """Write report files under ``out_dir``; returns the written paths, manifest last."""
    r = _as_dict(report)
    formats = tuple(formats)
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report format(s) {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "report.json"
    path.write_text(json.dumps(r, sort_keys=True, indent=1, allow_nan=False) + "\n", encoding="utf-8")
    written.append(path)
    if "markdown" in formats:
        path = out / "report.md"
        path.write_text(render_markdown(r), encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        _write_csv(out / "summary.csv", summary_header(r), summary_rows(r))
        _write_csv(
            out / "metrics_per_run.csv",
            ["repetition", "seed", "predictor", "metric", "value", "n"],
            [
                [run["repetition"], run["seed"], pid, m["metric"], repr(m["value"]), m["n"]]
                for run in r["runs"]
                for pid, m in run["metrics"].items()
            ],
        )
        rec_header = ["repetition", "seed", "predictor", "case_id", "prefix_length", "actual", "predicted", "status", "detail"]
        _write_csv(out / "predictions.csv", rec_header, [[rec[k] for k in rec_header] for rec in r.get("records", [])])
        _write_csv(out / "stats.csv", STATS_HEADER, stats_rows(r))
        _write_csv(out / "good_turing.csv", ["m", "expected_novel"], good_turing_rows(r))
        _write_csv(out / "convergence.csv", ["n", "ks_distance"], [[n, repr(d)] for n, d in r["convergence"]])
        _write_csv(out / "tags.csv", ["repetition", "case_id", "family"], r.get("tags", []))
        written += [out / n for n in ("summary.csv", "metrics_per_run.csv", "predictions.csv", "stats.csv",
                                       "good_turing.csv", "convergence.csv", "tags.csv")]

    manifest = {
        "inputs": {k: v for k, v in r["provenance"].items() if k.endswith("digest")},
        "seeds": r["provenance"].get("seeds"),
        "files": {p.name: _sha(p) for p in written},
    }
    if mode is not None:
        manifest["mode"] = mode
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    written.append(path)
    return written
