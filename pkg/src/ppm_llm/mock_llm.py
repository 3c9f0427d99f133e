"""Offline stand-ins for an LLM that follow the reply grammar.

:class:`LearnerEcho` reads the example and running instances back out of a
prompt, fits a beta-learner on the examples and answers with its prediction
plus a templated reasoning text. Hashed prompts work unchanged because the
learner only needs equality between names.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping

from .beta_learners import BetaLearnerSpec, Case, fit_cases, parse_learner_id
from .encoding import KPI_KEYS, decode_seq
from .errors import EncodingParseError
from .event_log import ACTIVITY_OCCURRENCE, TOTAL_TIME
from .llm_gateway import LlmEndpointConfig, prompt_digest
from .prompts import format_reply

_TARGET_RE = re.compile(r'which value is "yes" if the activity (.+?) occurs in the process instance')
_KPI_KEY_TO_KPI = {v: k for k, v in KPI_KEYS.items()}

_FAMILY_TEXT = {
    "knn_act": (
        "I represent every completed case by its activity counts, that is the number of times each "
        "activity was executed, and compare them with the activity counts of the running case. "
        "The {k} cases with the closest activity counts are selected."
    ),
    "knn_att": (
        "I compare the trace attributes of the running case with the attribute values of the completed "
        "cases and keep the {k} cases whose attributes are closest."
    ),
    "time_seq": (
        "I compare the cumulative elapsed minutes of the running case with the elapsed minutes of every "
        "completed case at the same positions and keep the {k} cases with the most similar timing."
    ),
    "path_pred": (
        "I look for completed cases whose sequence extends the observed prefix, that is possible "
        "continuations of the running case along the same path."
    ),
    "activity_based": (
        "I compare the sequence of activities of the running case with the activity sequence of every "
        "completed case and let the {k} closest cases vote."
    ),
    "state_based": (
        "I look at the last activity of the running case and check how often the target occurs in "
        "completed cases that went through that activity."
    ),
    "att_based": (
        "I compare the trace attributes of the running case with the attribute values of the completed "
        "cases and let the {k} closest cases vote."
    ),
    "positive_evidence": "I check whether the target activity has already occurred in the running case.",
}

_AGG_TEXT = {
    "median": "I take the median of their total times to stay robust to outliers. Median = {v}.",
    "mean": "I take the mean of their total times, i.e. their average. Mean = {v}.",
    "mode": "I take the most frequent range of their total times, the mode, and report its centre. Mode = {v}.",
}


def _parse_prompt(prompt: str):
    examples: list[Case] = []
    running: Case | None = None
    running_id = None
    kpi = None
    for line in prompt.splitlines():
        stripped = line.strip()
        if not stripped.startswith("{"):
            continue
        try:
            inst = decode_seq(stripped)
        except EncodingParseError:
            # the running case sits inside a one-key wrapper object
            inner_at = stripped.find(": {")
            if inner_at < 0 or not stripped.endswith("}}"):
                continue
            running_id = stripped[2: inner_at - 1]
            inst = decode_seq(stripped[inner_at + 2: -1])
        if inst.is_running:
            running = Case(inst.globals, tuple(inst.activities), tuple(inst.elapsed))
            continue
        kpi_key = next(k for k in _KPI_KEY_TO_KPI if k in stripped)
        kpi = _KPI_KEY_TO_KPI[kpi_key]
        total = inst.elapsed[-1] if kpi == ACTIVITY_OCCURRENCE else int(inst.kpi)
        examples.append(Case(inst.globals, tuple(inst.activities), tuple(inst.elapsed), total))
    if running is None or not examples:
        raise ValueError("prompt does not contain examples and a running case")
    return examples, running, running_id, kpi


def _attribute_kinds(cases: Iterable[Case]) -> list[tuple[str, bool]]:
    kinds: dict[str, bool] = {}
    for case in cases:
        for name, value in case.globals.items():
            kinds.setdefault(name, not isinstance(value, str))
    return list(kinds.items())


class LearnerEcho:
    """Answers every prompt with one beta-learner's prediction."""

    def __init__(self, spec: BetaLearnerSpec | str):
        self.spec = parse_learner_id(spec) if isinstance(spec, str) else spec
        self.calls = 0

    def reasoning(self, learner, value) -> str:
        text = _FAMILY_TEXT[self.spec.family].format(k=learner.k)
        if self.spec.is_regression:
            text += " " + _AGG_TEXT[self.spec.aggregation].format(v=value)
        else:
            text += f" Prediction: {'yes' if value else 'no'}."
        return text

    def __call__(self, prompt: str, config: LlmEndpointConfig | None = None) -> str:
        self.calls += 1
        examples, running, _, kpi = _parse_prompt(prompt)
        if self.spec.is_regression != (kpi == TOTAL_TIME):
            raise ValueError(f"learner {self.spec.id} does not match the prompt KPI {kpi}")
        target = None
        if kpi == ACTIVITY_OCCURRENCE:
            m = _TARGET_RE.search(prompt)
            if m is None:
                raise ValueError("occurrence prompt without a target activity")
            target = m.group(1)
        learner = fit_cases(self.spec, examples, _attribute_kinds(examples + [running]), target)
        if self.spec.is_regression:
            value: int | bool = learner.predict_total_time_case(running)
        else:
            value = learner.predict_occurrence_case(running, target)
        return format_reply(self.reasoning(learner, value), value)


def script_from_prompts(prompts: Iterable[str], responder) -> dict[str, str]:
    """Freeze a responder's answers into a digest -> reply script."""
    return {prompt_digest(p): responder(p) for p in prompts}


def echo_from_config(name: str, params: Mapping | None = None) -> LearnerEcho:
    spec = parse_learner_id(name)
    if params:
        spec = BetaLearnerSpec(spec.family, spec.aggregation, spec.k, dict(params))
    return LearnerEcho(spec)
