"""``ppm-llm`` command line.

Every subcommand accepts ``--config``, ``--seed``, ``--mode`` and ``--out``.
Failures print a one-line JSON object ``{"error": ..., "message": ...}`` on
stderr and exit with status 1; usage errors print the subcommand help and
exit with status 2.
"""

from __future__ import annotations

import csv
import json
import sys
from collections import defaultdict
from pathlib import Path

import click
import numpy as np

from . import runner as runner_mod
from .anonymizer import HashMapping, anonymize_prompt, build_context_set, build_mapping, deanonymize_prompt
from .beta_learners import BetaLearnerSpec, fit
from .config import ExperimentConfig, load_config
from .encoding import encode_aggr, encode_seq, write_aggregated_csv
from .errors import DegenerateInputError, PpmError
from .event_log import ACTIVITY_OCCURRENCE, TOTAL_TIME
from .llm_gateway import MODES, Gateway, ReplayCache
from .report import FORMATS, render_markdown, render_report
from .split_sampler import sample_training
from .stats import (
    counts_from_tags,
    f1,
    friedman_nemenyi,
    good_turing,
    load_annotations,
    mae,
    significance_stars,
    wilcoxon_signed_rank,
)

RECORD_HEADER = ["repetition", "seed", "predictor", "case_id", "prefix_length", "actual", "predicted", "status", "detail"]


class _HelpOnUsage(click.Command):
    def parse_args(self, ctx, args):
        try:
            return super().parse_args(ctx, args)
        except click.UsageError:
            click.echo(ctx.get_help(), err=True)
            raise


def _usage(message: str) -> click.UsageError:
    ctx = click.get_current_context()
    click.echo(ctx.get_help(), err=True)
    return click.UsageError(message, ctx)


def common(func):
    """Attach the options every subcommand shares."""
    func = click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")(func)
    func = click.option("--mode", type=click.Choice(MODES), help="LLM gateway mode.")(func)
    func = click.option("--seed", type=int, help="Seed (first of consecutive seeds for `run`).")(func)
    func = click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path),
                        help="Experiment TOML file.")(func)
    return func


def _config(config_path, seed=None, mode=None, out=None, required=True) -> ExperimentConfig | None:
    if config_path is None:
        if required:
            raise _usage("--config is required for this command")
        return None
    return load_config(config_path).with_overrides(seed, mode, out)


def _out_dir(cfg: ExperimentConfig | None, out: Path | None) -> Path:
    path = out if out is not None else (cfg.output_dir if cfg is not None else Path("."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(obj) -> None:
    click.echo(json.dumps(obj, indent=1, sort_keys=True))


def _write_records(path: Path, records) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_HEADER)
        for rec in records:
            writer.writerow([getattr(rec, k) for k in RECORD_HEADER])


def _read_records(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"predictor", "case_id", "actual", "predicted"} - set(reader.fieldnames or ())
        if missing:
            raise PpmError(f"{path}: missing column(s) {sorted(missing)}")
        return [row for row in reader if row.get("status", "scored") == "scored"]


def _value(text: str, kpi: str):
    if kpi == TOTAL_TIME:
        return float(text)
    return text.strip().lower() in ("true", "yes", "1")


def _infer_kpi(rows, kpi: str | None) -> str:
    if kpi:
        return kpi
    booleans = {"true", "false", "yes", "no"}
    return ACTIVITY_OCCURRENCE if all(r["actual"].strip().lower() in booleans for r in rows) else TOTAL_TIME


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """LLM-based predictive process monitoring experiments."""


cli.command_class = _HelpOnUsage


@cli.command()
@common
def split(config_path, seed, mode, out):
    """Temporal split; writes split_manifest.csv."""
    cfg = _config(config_path, seed, mode, out)
    prep = runner_mod.prepare(cfg)
    out_dir = _out_dir(cfg, out)
    prep.split.write_manifest(out_dir / "split_manifest.csv")
    _emit({
        "t_split": prep.split.t_split.isoformat(),
        "train": len(prep.split.train),
        "test": len(prep.split.test_truncated),
        "skipped": len(prep.split.skipped),
        "manifest": str(out_dir / "split_manifest.csv"),
    })


@cli.command()
@common
@click.option("--kind", type=click.Choice(["seq", "aggr"]), default="seq", show_default=True)
@click.option("--bucket", type=click.Choice(["sample", "train", "test"]), default="test", show_default=True,
              help="sample = the seeded training sample.")
def encode(config_path, seed, mode, out, kind, bucket):
    """Encode traces as prompt strings or count rows."""
    cfg = _config(config_path, seed, mode, out)
    prep = runner_mod.prepare(cfg)
    running = bucket == "test"
    if bucket == "test":
        traces = prep.instances
    elif bucket == "train":
        traces = prep.split.train.traces
    else:
        traces = sample_training(prep.split.train, cfg.n_train, cfg.seeds[0], cfg.prng).traces
    out_dir = _out_dir(cfg, out)
    if kind == "seq":
        path = out_dir / f"encoded_{bucket}.txt"
        lines = []
        for t in traces:
            inst = encode_seq(t, cfg.schema, running)
            lines.append(f'{{"{t.case_id}": {inst.payload}}}' if running else inst.payload)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        path = out_dir / f"encoded_{bucket}.csv"
        alphabet = prep.split.train.alphabet
        write_aggregated_csv([encode_aggr(t, cfg.schema, alphabet, running) for t in traces], path)
    _emit({"instances": len(traces), "path": str(path)})


@cli.command()
@common
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Text to (de-)anonymize; without it only the mapping is written.")
@click.option("--mapping", "mapping_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Existing token,identifier CSV instead of building one.")
@click.option("--reverse", is_flag=True, help="Map identifiers back to tokens.")
def anonymize(config_path, seed, mode, out, input_path, mapping_path, reverse):
    """Build the semantic-hashing mapping and apply it to a text file."""
    cfg = _config(config_path, seed, mode, out, required=mapping_path is None)
    salt = str(seed if seed is not None else (cfg.seeds[0] if cfg else ""))
    if mapping_path is not None:
        mapping = HashMapping.from_csv(mapping_path, salt)
    else:
        prep = runner_mod.prepare(cfg)
        mapping = build_mapping(build_context_set(prep.log, cfg.schema), salt)
    out_dir = _out_dir(cfg, out)
    result = {"tokens": len(mapping)}
    if mapping_path is None:
        mapping.to_csv(out_dir / "mapping.csv")
        result["mapping"] = str(out_dir / "mapping.csv")
    if input_path is not None:
        text = input_path.read_text(encoding="utf-8")
        converted = deanonymize_prompt(text, mapping) if reverse else anonymize_prompt(text, mapping)
        target = out_dir / (input_path.stem + (".plain" if reverse else ".hashed") + input_path.suffix)
        target.write_text(converted, encoding="utf-8")
        result["output"] = str(target)
    _emit(result)


@cli.command("predict-llm")
@common
@click.option("--hashed", is_flag=True, help="Use the hashed prompt variant.")
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path))
def predict_llm(config_path, seed, mode, out, hashed, cache_dir):
    """LLM predictions for every running instance of one repetition."""
    cfg = _config(config_path, seed, mode, out)
    prep = runner_mod.prepare(cfg)
    seed_used = cfg.seeds[0]
    sample = sample_training(prep.split.train, cfg.n_train, seed_used, cfg.prng)
    transport = None if cfg.mode == "replay" else runner_mod.make_transport(cfg)
    gateway = Gateway(cfg.llm, ReplayCache(cache_dir or cfg.resolved_cache_dir), cfg.mode, transport)
    mapping = build_mapping(build_context_set(prep.log, cfg.schema), str(seed_used)) if hashed else None
    out_dir = _out_dir(cfg, out)
    variant = "hashed" if hashed else "plain"
    outcomes = runner_mod.llm_predictions(cfg, sample, prep.instances, gateway, mapping, out_dir / "runs" / f"rep01-{variant}")
    pid = runner_mod.LLM_HASHED if hashed else runner_mod.LLM
    records = [
        runner_mod.PredictionRecord(
            1, seed_used, pid, t.case_id, len(t), prep.actuals[t.case_id], outcomes[t.case_id].answer,
            "failed" if outcomes[t.case_id].error else "scored", outcomes[t.case_id].error or "",
        )
        for t in prep.instances
    ]
    path = out_dir / f"predictions_{pid}.csv"
    _write_records(path, records)
    _emit({"instances": len(records), "failed": sum(r.status == "failed" for r in records), "path": str(path)})


@cli.command("predict-beta")
@common
@click.option("--family", required=True)
@click.option("--agg", "aggregation", default="none", show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True, help="Multiply predictions (regression).")
@click.option("--all-data", is_flag=True, help="Fit on the whole training pool instead of a seeded sample.")
def predict_beta(config_path, seed, mode, out, family, aggregation, k, scale, all_data):
    """Beta-learner predictions as a PredictionRecord CSV."""
    cfg = _config(config_path, seed, mode, out)
    params = {"scale": scale} if scale != 1.0 else {}
    try:
        spec = BetaLearnerSpec(family, aggregation, k, params)
    except ValueError as exc:
        raise _usage(str(exc)) from None
    prep = runner_mod.prepare(cfg)
    seed_used = cfg.seeds[0]
    train = prep.split.train if all_data else sample_training(prep.split.train, cfg.n_train, seed_used, cfg.prng)
    preds = runner_mod.learner_predictions(fit(spec, train, cfg.schema), prep.instances, cfg)
    records = [
        runner_mod.PredictionRecord(1, seed_used, spec.id, t.case_id, len(t), prep.actuals[t.case_id],
                                    preds[t.case_id], "scored")
        for t in prep.instances
    ]
    out_dir = _out_dir(cfg, out)
    path = out_dir / f"predictions_{spec.id}.csv"
    _write_records(path, records)
    _emit({"instances": len(records), "path": str(path)})


@cli.command()
@common
@click.option("--predictions", "pred_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kpi", type=click.Choice([TOTAL_TIME, ACTIVITY_OCCURRENCE]))
def evaluate(config_path, seed, mode, out, pred_paths, kpi):
    """MAE or F1 per predictor and repetition from PredictionRecord CSVs."""
    cfg = _config(config_path, seed, mode, out, required=False)
    rows = [row for p in pred_paths for row in _read_records(p)]
    kpi = _infer_kpi(rows, kpi or (cfg.kpi if cfg else None))
    groups = defaultdict(list)
    for row in rows:
        groups[(row["predictor"], row.get("repetition", "1"))].append(
            (_value(row["actual"], kpi), _value(row["predicted"], kpi))
        )
    results = []
    for (pid, rep), pairs in sorted(groups.items()):
        m = mae(pairs) if kpi == TOTAL_TIME else f1(pairs)
        results.append({"predictor": pid, "repetition": rep, "metric": m.metric, "value": m.value, "n": m.n,
                        "degenerate": m.degenerate})
    out_dir = _out_dir(cfg, out)
    with (out_dir / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(results[0]) if results else ["predictor"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(results)
    _emit(results)


@cli.command()
@common
@click.option("--predictions", "pred_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--reference", default=runner_mod.LLM, show_default=True, help="Predictor every other one is tested against.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--kpi", type=click.Choice([TOTAL_TIME, ACTIVITY_OCCURRENCE]))
def stats(config_path, seed, mode, out, pred_paths, reference, alpha, kpi):
    """Wilcoxon per predictor against the reference, plus Friedman-Nemenyi over all."""
    cfg = _config(config_path, seed, mode, out, required=False)
    rows = [row for p in pred_paths for row in _read_records(p)]
    kpi = _infer_kpi(rows, kpi or (cfg.kpi if cfg else None))
    losses: dict[str, dict[tuple[str, str], float]] = defaultdict(dict)
    for row in rows:
        y, p = _value(row["actual"], kpi), _value(row["predicted"], kpi)
        losses[row["predictor"]][(row.get("repetition", "1"), row["case_id"])] = (
            abs(y - p) if kpi == TOTAL_TIME else float(y != p)
        )
    if reference not in losses:
        raise _usage(f"reference predictor {reference!r} not found in the predictions")
    keys = sorted(set.intersection(*(set(v) for v in losses.values())))
    names = [reference] + sorted(n for n in losses if n != reference)
    results = []
    for name in names[1:]:
        a = [losses[reference][k] for k in keys]
        b = [losses[name][k] for k in keys]
        try:
            t = wilcoxon_signed_rank(a, b, alpha)
            results.append({"comparison": f"{reference} vs {name}", "test": t.test, "statistic": t.statistic,
                            "p_value": t.p_value, "decision": t.decision, "n": t.n, "stars": significance_stars(t.p_value)})
        except DegenerateInputError as exc:
            results.append({"comparison": f"{reference} vs {name}", "test": "wilcoxon", "statistic": 0.0,
                            "p_value": 1.0, "decision": "retain", "n": 0, "stars": "ns", "note": str(exc)})
    if len(names) > 1 and len(keys) >= 2:
        matrix = np.array([[losses[n][k] for n in names] for k in keys])
        try:
            t = friedman_nemenyi(matrix, alpha)
            results.append({"comparison": " / ".join(names), "test": t.test, "statistic": t.statistic,
                            "p_value": t.p_value, "decision": t.decision, "n": t.n,
                            "critical_difference": t.extra["critical_difference"],
                            "mean_ranks": t.extra["mean_ranks"]})
        except DegenerateInputError as exc:
            results.append({"comparison": " / ".join(names), "test": "friedman_nemenyi", "note": str(exc)})
    out_dir = _out_dir(cfg, out)
    (out_dir / "stats.json").write_text(json.dumps(results, indent=1) + "\n", encoding="utf-8")
    _emit(results)


def _families(path: Path) -> list[str]:
    """Every row's family; a run's tags.csv repeats case ids across repetitions."""
    load_annotations(path)  # validates the columns
    with path.open(newline="", encoding="utf-8") as fh:
        return [row["family"].strip() for row in csv.DictReader(fh)]


@cli.command("good-turing")
@common
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="CSV with columns case_id,family (e.g. tags.csv of a run).")
@click.option("--m", "m_text", default="1,10,100", show_default=True, help="Comma-separated m values.")
def good_turing_cmd(config_path, seed, mode, out, annotations, m_text):
    """Expected number of novel pattern families after m more explanations."""
    cfg = _config(config_path, seed, mode, out, required=False)
    try:
        m_values = [int(x) for x in m_text.split(",") if x.strip()]
    except ValueError:
        raise _usage(f"--m must be comma-separated integers, got {m_text!r}") from None
    counts = counts_from_tags(_families(annotations))
    est = good_turing(counts, m_values)
    out_dir = _out_dir(cfg, out)
    with (out_dir / "good_turing.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m", "expected_novel"])
        writer.writerows([m, repr(v)] for m, v in est.expected.items())
    cells = ", ".join(f"m={m}: {v:.3f}" for m, v in est.expected.items())
    click.echo(f"| N | N_1 | P_0 | expected novel |\n|---|---|---|---|\n| {est.N} | {est.N_r.get(1, 0)} | {est.p0:.4f} | {cells} |")


@cli.command()
@common
@click.option("--grid", "grid_text", help="Comma-separated sample sizes (default: config grid).")
def convergence(config_path, seed, mode, out, grid_text):
    """KS distance of growing samples' KPI distribution to the whole log."""
    from .event_log import load_csv
    from .stats import convergence_curve

    cfg = _config(config_path, seed, mode, out)
    event_log = load_csv(cfg.log_path, cfg.schema)
    if grid_text:
        try:
            grid = [int(x) for x in grid_text.split(",") if x.strip()]
        except ValueError:
            raise _usage(f"--grid must be comma-separated integers, got {grid_text!r}") from None
    else:
        grid = list(cfg.convergence_grid) or [n for n in (1, 5, 10, 20, 30, 50, 100) if n <= len(event_log)]
    curve = convergence_curve(event_log, cfg.schema, grid, cfg.seeds[0], cfg.prng)
    out_dir = _out_dir(cfg, out)
    with (out_dir / "convergence.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "ks_distance"])
        writer.writerows([n, repr(d)] for n, d in curve)
    _emit([[n, d] for n, d in curve])


@cli.command("run")
@common
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path),
              help="Reply cache (default: the config's cache_dir or <out>/llm_cache).")
@click.option("--format", "formats", type=click.Choice(FORMATS), multiple=True, default=FORMATS, show_default=True)
def run_cmd(config_path, seed, mode, out, cache_dir, formats):
    """Full experiment: every repetition, statistics and report files."""
    from dataclasses import replace

    cfg = _config(config_path, seed, mode, out)
    if cache_dir is not None:
        cfg = replace(cfg, cache_dir=cache_dir)
    report = runner_mod.run(cfg)
    render_report(report, cfg.output_dir, formats, mode=cfg.mode)
    click.echo(render_markdown(report).split("\n## ")[0].rstrip())
    click.echo(f"\nreport digest {runner_mod.report_digest(report)}")


@cli.command()
@common
@click.option("--from", "source", type=click.Path(exists=True, path_type=Path), required=True,
              help="report.json or the directory holding it.")
@click.option("--format", "formats", type=click.Choice(FORMATS), multiple=True, default=FORMATS, show_default=True)
def report(config_path, seed, mode, out, source, formats):
    """Re-render report files from a stored report.json."""
    path = source / "report.json" if source.is_dir() else source
    data = json.loads(path.read_text(encoding="utf-8"))
    out_dir = out if out is not None else path.parent
    written = render_report(data, out_dir, formats, mode=mode)
    _emit([str(p) for p in written])


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="ppm-llm", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except PpmError as exc:
        click.echo(json.dumps({"error": exc.kind, "message": str(exc)}), err=True)
        return 1
    except (OSError, ValueError) as exc:
        kind = "io_error" if isinstance(exc, OSError) else "invalid_input"
        click.echo(json.dumps({"error": kind, "message": str(exc)}), err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
