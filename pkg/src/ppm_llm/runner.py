"""End-to-end experiment: split, repeated sampling, prediction, scoring and statistics."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .anonymizer import HashMapping, build_context_set, build_mapping
from .beta_learners import BetaLearnerSpec, FittedLearner, fit, query_from_trace
from .config import ExperimentConfig, ExternalSpec
from .encoding import encode_seq
from .errors import (
    ConfigError,
    DegenerateInputError,
    LlmError,
    MissingApiKeyError,
    MissingCacheEntryError,
    ResponseFormatError,
)
from .event_log import TOTAL_TIME, EventLog, Trace, kpi_value, load_csv
from .llm_gateway import Gateway, HttpTransport, ReplayCache, Transport, cache_key
from .mock_llm import echo_from_config
from .prompts import build_prompt, parse_response
from .split_sampler import SplitResult, compute_t_split, sample_training, temporal_split
from .stats import (
    MetricResult,
    TestResult,
    convergence_curve,
    counts_from_tags,
    f1,
    friedman_nemenyi,
    good_turing,
    load_annotations,
    mae,
    tag_with_overrides,
    wilcoxon_signed_rank,
)
from .stats.good_turing import GoodTuringEstimate

log = logging.getLogger(__name__)

LLM = "llm"
LLM_HASHED = "llm_hashed"
_DEFAULT_GRID = (1, 5, 10, 20, 30, 50, 100, 200, 500, 1000)


@dataclass(frozen=True)
class Predictor:
    id: str
    label: str
    kind: str  # llm | external | learner
    hashed: bool | None = None
    pattern: str | None = None  # tag a reasoning must carry to count as this learner


@dataclass(frozen=True)
class PredictionRecord:
    repetition: int
    seed: int
    predictor: str
    case_id: str
    prefix_length: int
    actual: int | bool
    predicted: int | bool | None
    status: str  # scored | excluded | failed
    detail: str = ""


@dataclass(frozen=True)
class LlmOutcome:
    case_id: str
    prompt: str
    reply: str | None
    answer: int | bool | None
    reasoning: str
    error: str | None = None
    attempts: int = 1


@dataclass
class RunResult:
    repetition: int
    seed: int
    n_instances: int
    scored: list[str]
    failures: list[tuple[str, str, str]]  # (predictor, case_id, reason)
    metrics: dict[str, MetricResult]

    @property
    def n_scored(self) -> int:
        return len(self.scored)


@dataclass
class ExperimentReport:
    name: str
    kpi: str
    n_train: int
    alpha: float
    model_name: str
    pairing: str
    best_window: int | None
    predictors: list[Predictor]
    runs: list[RunResult]
    records: list[PredictionRecord]
    all_df: dict[str, float | None]
    aggregates: dict[str, tuple[float, float]]
    tests: dict[str, TestResult]
    nemenyi: TestResult | None
    tags: list[tuple[int, str, str]]  # (repetition, case_id, tag)
    occurrence: dict[str, int]
    delta_llm: dict[str, float | None]
    best: dict[str, int | None]
    good_turing: GoodTuringEstimate | None
    convergence: list[tuple[int, float]]
    provenance: dict[str, Any] = field(default_factory=dict)

    def metric_values(self, predictor: str) -> list[float]:
        return [r.metrics[predictor].value for r in self.runs]

    def to_dict(self) -> dict[str, Any]:
        def test_dict(t: TestResult | None):
            return None if t is None else asdict(t)

        gt = None
        if self.good_turing is not None:
            g = self.good_turing
            gt = {
                "counts": dict(g.counts),
                "N": g.N,
                "N_r": {str(k): v for k, v in g.N_r.items()},
                "p_star": {str(k): v for k, v in g.p_star.items()},
                "p_star_normalized": {str(k): v for k, v in g.p_star_normalized.items()},
                "p0": g.p0,
                "stranded_mass": g.stranded_mass,
                "expected_novel": {str(k): v for k, v in g.expected.items()},
            }
        return {
            "name": self.name,
            "kpi": self.kpi,
            "n_train": self.n_train,
            "alpha": self.alpha,
            "model_name": self.model_name,
            "pairing": self.pairing,
            "best_window": self.best_window,
            "predictors": [asdict(p) for p in self.predictors],
            "runs": [
                {
                    "repetition": r.repetition,
                    "seed": r.seed,
                    "n_instances": r.n_instances,
                    "n_scored": r.n_scored,
                    "failures": [list(f) for f in r.failures],
                    "metrics": {
                        pid: {"metric": m.metric, "value": m.value, "n": m.n, "degenerate": m.degenerate}
                        for pid, m in r.metrics.items()
                    },
                }
                for r in self.runs
            ],
            "all_df": self.all_df,
            "aggregates": {k: {"mean": m, "std": s} for k, (m, s) in self.aggregates.items()},
            "tests": {k: test_dict(t) for k, t in self.tests.items()},
            "nemenyi": test_dict(self.nemenyi),
            "occurrence": self.occurrence,
            "delta_llm": self.delta_llm,
            "best": self.best,
            "good_turing": gt,
            "convergence": [list(p) for p in self.convergence],
            "tags": [list(t) for t in self.tags],
            "records": [asdict(r) for r in self.records],
            "provenance": self.provenance,
        }


# -- preparation -------------------------------------------------------------


@dataclass(frozen=True)
class Prepared:
    log: EventLog
    split: SplitResult
    actuals: dict[str, int | bool]
    instances: tuple[Trace, ...]  # truncated test traces, in log order


def prepare(config: ExperimentConfig) -> Prepared:
    event_log = load_csv(config.log_path, config.schema)
    t_split = compute_t_split(event_log, config.split_fraction)
    split = temporal_split(event_log, t_split)
    if len(split.train) < config.n_train:
        raise ConfigError(f"n_train={config.n_train} exceeds the {len(split.train)} completed training traces")
    if not split.test_truncated.traces:
        raise DegenerateInputError("the split leaves no running test instances")
    truth = split.ground_truth()
    actuals = {cid: kpi_value(t, config.schema) for cid, t in truth.items()}
    return Prepared(event_log, split, actuals, split.test_truncated.traces)


def make_transport(config: ExperimentConfig) -> Transport:
    if config.llm.adapter == "echo":
        return echo_from_config(config.echo_learner, config.echo_params)
    return HttpTransport()


def learner_predictions(
    learner: FittedLearner, instances: Sequence[Trace], config: ExperimentConfig
) -> dict[str, int | bool]:
    out: dict[str, int | bool] = {}
    for prefix in instances:
        query = query_from_trace(prefix, config.schema)
        if learner.spec.is_regression:
            out[prefix.case_id] = learner.predict_total_time_case(query)
        else:
            out[prefix.case_id] = learner.predict_occurrence_case(query, config.schema.target_activity)
    return out


def _safe_name(case_id: str) -> str:
    return re.sub(r"[^\w.-]", "_", case_id)


def llm_predictions(
    config: ExperimentConfig,
    sample: EventLog,
    instances: Sequence[Trace],
    gateway: Callable[[str], str],
    mapping: HashMapping | None = None,
    transcript_dir: Path | None = None,
) -> dict[str, LlmOutcome]:
    """Prompt the LLM once per running instance, retrying unparseable replies."""
    schema = config.schema
    examples = [encode_seq(t, schema, running=False) for t in sample.traces]
    hashed = mapping is not None
    attempts = 1 if config.mode == "replay" else config.parse_attempts

    def one(prefix: Trace) -> LlmOutcome:
        running = encode_seq(prefix, schema, running=True)
        prompt = build_prompt(examples, running, schema, hashed, mapping, config.max_prompt_chars).text
        reply, error = None, None
        for attempt in range(1, attempts + 1):
            try:
                reply = gateway(prompt)
                parsed = parse_response(reply, schema.kpi)
                return LlmOutcome(prefix.case_id, prompt, reply, parsed.answer, parsed.reasoning, None, attempt)
            except ResponseFormatError as exc:
                error = f"{exc.reason}: {exc}"
            except (MissingCacheEntryError, MissingApiKeyError):
                raise
            except LlmError as exc:
                error = f"{exc.kind}: {exc}"
        return LlmOutcome(prefix.case_id, prompt, reply, None, "", error, attempts)

    with ThreadPoolExecutor(max_workers=max(1, config.llm.concurrency)) as pool:
        outcomes = list(pool.map(one, instances))
    if transcript_dir is not None:
        transcript_dir.mkdir(parents=True, exist_ok=True)
        for o in outcomes:
            stem = _safe_name(o.case_id)
            (transcript_dir / f"{stem}.prompt.txt").write_text(o.prompt, encoding="utf-8")
            if o.reply is not None:
                (transcript_dir / f"{stem}.reply.txt").write_text(o.reply, encoding="utf-8")
    return {o.case_id: o for o in outcomes}


def _parse_prediction(text: str, kpi: str, where: str) -> int | bool:
    text = text.strip()
    if kpi == TOTAL_TIME:
        try:
            return int(round(float(text)))
        except ValueError:
            raise ConfigError(f"{where}: prediction {text!r} is not numeric") from None
    low = text.lower()
    if low in ("yes", "true", "1"):
        return True
    if low in ("no", "false", "0"):
        return False
    raise ConfigError(f"{where}: prediction {text!r} is not yes/no")


def load_external(spec: ExternalSpec, kpi: str) -> tuple[dict[tuple[int, str], int | bool], dict[str, int | bool]]:
    """Per-run predictions keyed by (repetition, case_id) and optional all-data predictions."""

    def read(path: Path, columns: tuple[str, ...]) -> list[dict[str, str]]:
        try:
            with path.open(newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                missing = set(columns) - set(reader.fieldnames or ())
                if missing:
                    raise ConfigError(f"{path}: missing column(s) {sorted(missing)}")
                return list(reader)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None

    runs = {}
    for i, row in enumerate(read(spec.predictions, ("repetition", "case_id", "prediction")), start=2):
        where = f"{spec.predictions} row {i}"
        try:
            rep = int(row["repetition"])
        except ValueError:
            raise ConfigError(f"{where}: repetition must be an integer") from None
        runs[(rep, row["case_id"])] = _parse_prediction(row["prediction"], kpi, where)
    whole = {}
    if spec.all_df is not None:
        for i, row in enumerate(read(spec.all_df, ("case_id", "prediction")), start=2):
            whole[row["case_id"]] = _parse_prediction(row["prediction"], kpi, f"{spec.all_df} row {i}")
    return runs, whole


# -- scoring helpers --------------------------------------------------------------


def _metric(kpi: str, pairs: Sequence[tuple[Any, Any]]) -> MetricResult:
    return mae(pairs) if kpi == TOTAL_TIME else f1(pairs)


def _loss(kpi: str, actual, predicted) -> float:
    if kpi == TOTAL_TIME:
        return abs(float(actual) - float(predicted))
    return float(bool(actual) != bool(predicted))


def _degenerate_test(test: str, alpha: float, reason: str) -> TestResult:
    # identical predictions carry no evidence against H0
    return TestResult(test, 0.0, 1.0, alpha, "retain", 0, "degenerate", extra={"degenerate": True, "reason": reason})


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def delta_llm(kpi: str, actual: Sequence, llm: Sequence, learner: Sequence) -> float | None:
    """LLM advantage over a learner: relative MAE gap in percent, or F1 difference."""
    if not actual:
        return None
    if kpi == TOTAL_TIME:
        m_llm = mae(list(zip(actual, llm))).value
        m_learner = mae(list(zip(actual, learner))).value
        if m_llm == 0:
            return 0.0 if m_learner == 0 else None
        return (m_learner - m_llm) / m_llm * 100
    return f1(list(zip(actual, llm))).value - f1(list(zip(actual, learner))).value


def count_best(losses: Mapping[str, Sequence[float]], order: Sequence[str]) -> dict[str, int]:
    """Per-instance winners (lowest loss, ties to the earlier predictor)."""
    counts = {pid: 0 for pid in order}
    n = len(losses[order[0]]) if order else 0
    for i in range(n):
        best = min(order, key=lambda pid: (losses[pid][i], order.index(pid)))
        counts[best] += 1
    return counts


def _pattern(spec: BetaLearnerSpec) -> str:
    return spec.family if spec.aggregation == "none" else f"{spec.family}_{spec.aggregation}"


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest_digest(split: SplitResult) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(split.manifest_rows())
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


# -- the experiment -------------------------------------------------------------------


def run(
    config: ExperimentConfig,
    transport: Transport | None = None,
    mode: str | None = None,
    write_transcripts: bool = True,
) -> ExperimentReport:
    """Execute every repetition of ``config`` and assemble the report.

    ``transport`` replaces the configured LLM client (tests pass scripted
    responders); ``mode`` overrides the configured gateway mode.
    """
    if mode is not None:
        config = config.with_overrides(mode=mode)
    kpi = config.kpi
    prep = prepare(config)
    instances = prep.instances
    case_order = [t.case_id for t in instances]
    lengths = {t.case_id: len(t) for t in instances}

    transport = transport if transport is not None else (None if config.mode == "replay" else make_transport(config))
    cache = ReplayCache(config.resolved_cache_dir)
    gateway = Gateway(config.llm, cache, config.mode, transport)
    context = build_context_set(prep.log, config.schema)

    predictors = [Predictor(LLM, config.llm.model_name, "llm", False)]
    if config.hashed:
        predictors.append(Predictor(LLM_HASHED, config.llm.model_name, "llm", True))
    externals = {}
    for ext in config.external:
        pid = f"ext:{ext.name}"
        externals[pid] = load_external(ext, kpi)
        predictors.append(Predictor(pid, ext.name, "external"))
    for spec in config.learners:
        predictors.append(Predictor(spec.id, spec.label, "learner", None, _pattern(spec)))
    ids = [p.id for p in predictors]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"predictor ids collide: {ids}")

    overrides = load_annotations(config.annotations) if config.annotations else {}
    attribute_names = [a.name for a in config.schema.global_attributes]

    runs: list[RunResult] = []
    records: list[PredictionRecord] = []
    pooled_actual: list = []
    pooled_pred: dict[str, list] = {pid: [] for pid in ids}
    tags: list[tuple[int, str, str]] = []
    reply_digests: dict[str, str] = {}
    prompt_digests: list[str] = []

    for rep, seed in enumerate(config.seeds, start=1):
        sample = sample_training(prep.split.train, config.n_train, seed, config.prng)
        predictions: dict[str, dict[str, int | bool | None]] = {}
        failures: list[tuple[str, str, str]] = []
        outcomes_by_variant = {}
        for pred in predictors:
            if pred.kind != "llm":
                continue
            mapping = build_mapping(context, salt=str(seed)) if pred.hashed else None
            tdir = None
            if write_transcripts:
                tdir = config.output_dir / "runs" / f"rep{rep:02d}-{'hashed' if pred.hashed else 'plain'}"
            outcomes = llm_predictions(config, sample, instances, gateway, mapping, tdir)
            outcomes_by_variant[pred.id] = outcomes
            predictions[pred.id] = {cid: o.answer for cid, o in outcomes.items()}
            for cid in case_order:
                o = outcomes[cid]
                key = cache_key(o.prompt, config.llm.model_name, config.llm.temperature)
                prompt_digests.append(key)
                if o.reply is not None:
                    reply_digests[key] = hashlib.sha256(o.reply.encode("utf-8")).hexdigest()
                if o.error is not None:
                    failures.append((pred.id, cid, o.error))
        for pid, (per_run, _) in externals.items():
            got = {}
            for cid in case_order:
                if (rep, cid) not in per_run:
                    raise ConfigError(f"external {pid[4:]} has no prediction for repetition {rep}, case {cid}")
                got[cid] = per_run[(rep, cid)]
            predictions[pid] = got
        for spec in config.learners:
            predictions[spec.id] = learner_predictions(fit(spec, sample, config.schema), instances, config)

        failed = {cid for _, cid, _ in failures}
        scored = [cid for cid in case_order if cid not in failed]
        if not scored:
            raise DegenerateInputError(f"repetition {rep}: every LLM instance failed")
        detail = {(p, c): reason for p, c, reason in failures}
        metrics = {}
        for pid in ids:
            pairs = [(prep.actuals[cid], predictions[pid][cid]) for cid in scored]
            metrics[pid] = _metric(kpi, pairs)
            for cid in case_order:
                if cid in failed:
                    status = "failed" if (pid, cid) in detail else "excluded"
                else:
                    status = "scored"
                records.append(
                    PredictionRecord(
                        rep, seed, pid, cid, lengths[cid], prep.actuals[cid],
                        predictions[pid][cid], status, detail.get((pid, cid), ""),
                    )
                )
        for cid in scored:
            pooled_actual.append(prep.actuals[cid])
            for pid in ids:
                pooled_pred[pid].append(predictions[pid][cid])
            o = outcomes_by_variant[LLM][cid]
            tags.append((rep, cid, tag_with_overrides(cid, o.reasoning, overrides, kpi, attribute_names)))
        runs.append(RunResult(rep, seed, len(case_order), scored, failures, metrics))
        log.info("repetition %d/%d: %d of %d instances scored", rep, config.repetitions, len(scored), len(case_order))

    # all_df: learners on the whole training pool, externals from their files, nothing for the LLM
    all_df: dict[str, float | None] = {}
    for pred in predictors:
        if pred.kind == "llm":
            all_df[pred.id] = None
        elif pred.kind == "external":
            whole = externals[pred.id][1]
            pairs = [(prep.actuals[c], whole[c]) for c in case_order if c in whole]
            all_df[pred.id] = _metric(kpi, pairs).value if pairs else None
    for spec in config.learners:
        full = learner_predictions(fit(spec, prep.split.train, config.schema), instances, config)
        all_df[spec.id] = _metric(kpi, [(prep.actuals[c], full[c]) for c in case_order]).value

    aggregates = {pid: _mean_std([r.metrics[pid].value for r in runs]) for pid in ids}

    losses = {pid: [_loss(kpi, y, p) for y, p in zip(pooled_actual, pooled_pred[pid])] for pid in ids}
    run_values = {pid: [r.metrics[pid].value for r in runs] for pid in ids}
    paired = losses if config.pairing == "instance" else run_values

    tests: dict[str, TestResult] = {}
    for pred in predictors:
        if pred.kind == "llm":
            continue
        try:
            tests[pred.id] = wilcoxon_signed_rank(paired[LLM], paired[pred.id], config.alpha)
        except DegenerateInputError as exc:
            tests[pred.id] = _degenerate_test("wilcoxon", config.alpha, str(exc))

    nemenyi = None
    if config.hashed:
        matrix = np.column_stack([paired[LLM], paired[LLM_HASHED]])
        try:
            nemenyi = friedman_nemenyi(matrix, config.alpha)
        except (DegenerateInputError, ValueError) as exc:
            nemenyi = _degenerate_test("friedman_nemenyi", config.alpha, str(exc))

    tag_list = [t for _, _, t in tags]
    occurrence, deltas = {}, {}
    for pred in predictors:
        if pred.kind != "learner":
            continue
        idx = [i for i, t in enumerate(tag_list) if t == pred.pattern]
        occurrence[pred.id] = len(idx)
        deltas[pred.id] = delta_llm(
            kpi,
            [pooled_actual[i] for i in idx],
            [pooled_pred[LLM][i] for i in idx],
            [pooled_pred[pred.id][i] for i in idx],
        )

    contenders = [p.id for p in predictors if p.id != LLM_HASHED]
    window = config.best_window or len(pooled_actual)
    best_counts = count_best({pid: losses[pid][:window] for pid in contenders}, contenders)
    best: dict[str, int | None] = {pid: best_counts.get(pid) for pid in ids}

    family_counts = counts_from_tags(tag_list)
    gt = good_turing(family_counts) if family_counts else None

    grid = config.convergence_grid or tuple(n for n in _DEFAULT_GRID if n < len(prep.log)) + (len(prep.log),)
    curve = convergence_curve(prep.log, config.schema, [n for n in grid if n <= len(prep.log)], config.seeds[0], config.prng)

    cache_material = "\n".join(f"{k} {reply_digests[k]}" for k in sorted(reply_digests))
    provenance = {
        "config_digest": config.digest,
        "log_digest": _file_digest(config.log_path),
        "log_traces": len(prep.log),
        "t_split": prep.split.t_split.isoformat(),
        "train_pool": len(prep.split.train),
        "test_instances": len(instances),
        "skipped": len(prep.split.skipped),
        "split_manifest_digest": _manifest_digest(prep.split),
        "seeds": list(config.seeds),
        "prng": config.prng,
        "model_name": config.llm.model_name,
        "temperature": config.llm.temperature,
        "prompt_digest": hashlib.sha256("\n".join(prompt_digests).encode()).hexdigest(),
        "cache_digest": hashlib.sha256(cache_material.encode()).hexdigest(),
        "cache_entries": len(reply_digests),
    }
    return ExperimentReport(
        name=config.name,
        kpi=kpi,
        n_train=config.n_train,
        alpha=config.alpha,
        model_name=config.llm.model_name,
        pairing=config.pairing,
        best_window=config.best_window,
        predictors=predictors,
        runs=runs,
        records=records,
        all_df=all_df,
        aggregates=aggregates,
        tests=tests,
        nemenyi=nemenyi,
        tags=tags,
        occurrence=occurrence,
        delta_llm=deltas,
        best=best,
        good_turing=gt,
        convergence=curve,
        provenance=provenance,
    )


def report_digest(report: ExperimentReport) -> str:
    text = json.dumps(report.to_dict(), sort_keys=True, allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


__all__ = [
    "ExperimentReport",
    "LLM",
    "LLM_HASHED",
    "LlmOutcome",
    "PredictionRecord",
    "Predictor",
    "RunResult",
    "count_best",
    "delta_llm",
    "learner_predictions",
    "llm_predictions",
    "load_external",
    "make_transport",
    "prepare",
    "report_digest",
    "run",
]
