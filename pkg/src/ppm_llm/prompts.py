"""Seven-part prediction prompt and the marker-delimited reply grammar."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .anonymizer import HashMapping, anonymize_prompt
from .encoding import KPI_KEYS, EncodedInstance
from .errors import ResponseFormatError
from .event_log import ACTIVITY_OCCURRENCE, TOTAL_TIME, LogSchema

log = logging.getLogger(__name__)

SECTION_IDS = (
    "header",
    "attributes_encoding",
    "output_format",
    "running_format",
    "domain_background",
    "examples",
    "running_trace",
)

REASONING_MARKER = "[[ ## reasoning ## ]]"
ANSWER_MARKER = "[[ ## answer ## ]]"
COMPLETED_MARKER = "[[ ## completed ## ]]"

_MARKER_RES = {
    name: re.compile(r"\[\[\s*##\s*" + name + r"\s*##\s*\]\]", re.IGNORECASE)
    for name in ("reasoning", "answer", "completed")
}
_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?")
_BOOL_RE = re.compile(r"\b(yes|no|true|false|0|1)\b", re.IGNORECASE)
_TRUE_WORDS = {"yes", "true", "1"}


@dataclass(frozen=True)
class _KpiWording:
    label: str  # "'total time'"
    short: str  # "total time"
    examples_tail: str
    key_line: str
    answer_hint: str


def _wording(schema: LogSchema) -> _KpiWording:
    if schema.kpi == TOTAL_TIME:
        return _KpiWording(
            label="'total time'",
            short="total time",
            examples_tail="with their total times",
            key_line=(
                '- The key "total_time", which value is the total execution time in minutes '
                "from the start of the activity,\nthat is the value to predict."
            ),
            answer_hint="{your predicted total time as an integer}",
        )
    target = schema.target_activity
    return _KpiWording(
        label=f"'occurrence of activity {target}'",
        short=f"occurrence of activity {target}",
        examples_tail="with their activity occurrence values",
        key_line=(
            f'- The key "{KPI_KEYS[ACTIVITY_OCCURRENCE]}", which value is "yes" if the activity '
            f'{target} occurs in the process instance and "no" otherwise,\nthat is the value to predict.'
        ),
        answer_hint=f"{{yes if you predict that the activity {target} will occur, no otherwise}}",
    )


@dataclass(frozen=True)
class PromptBundle:
    sections: tuple[tuple[str, str], ...]
    kpi: str
    hashed: bool
    n_examples: int

    @property
    def text(self) -> str:
        return "\n\n".join(body for _, body in self.sections if body)

    def section(self, section_id: str) -> str:
        return dict(self.sections)[section_id]


def _sections(
    train: Sequence[EncodedInstance], running: EncodedInstance, schema: LogSchema, hashed: bool
) -> list[tuple[str, str]]:
    w = _wording(schema)
    header = (
        "You are an expert in process mining and machine learning. "
        f"Your task is to predict the {w.label} of\n"
        "process instances based on event logs, as each process instance is a sequence of activities."
    )
    attr_lines = []
    if not hashed:
        for attribute in schema.global_attributes:
            desc = schema.attribute_descriptions.get(attribute.name)
            if desc:
                attr_lines.append(f'- the key "{attribute.name}", representing {desc.strip().rstrip(".")}.')
    attributes_encoding = "\n".join(
        [
            "A event log is a collection of traces, where each trace represents a process instance.",
            "Each trace is mapped as a sequence of activities and integers representing the minutes since the start",
            "of the process.",
            "The log is represented as a python list containing one dictionary for each trace. Included in it are:",
            *attr_lines,
            '- the key "ActTimeSeq", which value is a list of [activity, cumulative elapsed minutes]',
            w.key_line,
        ]
    )
    output_format = "\n".join(
        [
            "All interactions will be structured in the following way, with the appropriate values filled in.",
            "",
            REASONING_MARKER,
            "{your step-by-step reasoning}",
            "",
            ANSWER_MARKER,
            w.answer_hint,
            "",
            COMPLETED_MARKER,
        ]
    )
    running_format = "\n".join(
        [
            "In adhering to this structure, your objective is to analyze the event log, and apply reasoning to predict",
            f"the {w.short} for a new case. This case belongs to a not-yet-completed process instance, represented by the",
            'label "Running" in "ActTimeSeq", indicating that more activities are expected before reaching the conclusion',
            "of the process instance.",
            "",
            "Ensure to articulate each step of your thought process in the reasoning field, detailing how you identify",
            "relationships with past cases and leverage your intuition about the meaning of activities to arrive at the",
            f"solution. The answer should be the final prediction of the {w.short} for the given process instance.",
            f"Respond with the corresponding output fields, starting with the field {REASONING_MARKER},",
            f"then {ANSWER_MARKER}, and then ending with the marker for {COMPLETED_MARKER}.",
            "",
            f"Your task is to learn from them and predict the {w.label} values for that traces.",
        ]
    )
    background = ""
    if schema.domain_background and not hashed:
        background = schema.domain_background.strip()
    examples = "\n".join(
        [f"The following list shows some completed example cases {w.examples_tail}:", ""]
        + [f"     {inst.payload}" for inst in train]
    )
    running_trace = "\n".join(
        [
            f"Now predict the {w.short} for this new uncompleted case, considering that the case is still running:",
            "",
            f'    {{"{running.case_id}": {running.payload}}}',
        ]
    )
    bodies = (header, attributes_encoding, output_format, running_format, background, examples, running_trace)
    return list(zip(SECTION_IDS, bodies))


def build_prompt(
    train: Sequence[EncodedInstance],
    running: EncodedInstance,
    schema: LogSchema,
    hashed: bool = False,
    mapping: HashMapping | None = None,
    max_chars: int | None = None,
) -> PromptBundle:
    """Assemble the prompt for one running instance.

    With ``hashed`` the analyst-provided lines are left out and every
    context-set token is replaced through ``mapping``. When ``max_chars`` is
    set, training instances are dropped from the end until the prompt fits.
    """
    if not train:
        raise ValueError("at least one training instance is required")
    if not running.is_running:
        raise ValueError(f"instance {running.case_id!r} is not marked as running")
    if any(inst.is_running for inst in train):
        raise ValueError("training instances must be completed")
    if hashed and mapping is None:
        raise ValueError("hashed prompts need a HashMapping")
    if any(inst.kind != "sequential" for inst in [*train, running]):
        raise ValueError("prompts are built from sequential encodings")

    def assemble(n: int) -> PromptBundle:
        sections = _sections(train[:n], running, schema, hashed)
        if hashed:
            sections = [(sid, anonymize_prompt(body, mapping)) for sid, body in sections]
        return PromptBundle(tuple(sections), schema.kpi, hashed, n)

    n = len(train)
    bundle = assemble(n)
    if max_chars is not None:
        while len(bundle.text) > max_chars and n > 1:
            n -= 1
            bundle = assemble(n)
        if len(bundle.text) > max_chars:
            raise ValueError(f"prompt for {running.case_id!r} exceeds {max_chars} characters with one example")
        if n < len(train):
            log.warning(
                "prompt for %s truncated to %d of %d training instances to fit %d characters",
                running.case_id, n, len(train), max_chars,
            )
    return bundle


@dataclass(frozen=True)
class LlmResponse:
    reasoning: str
    answer: int | bool
    raw: str


def _find(name: str, raw: str) -> re.Match[str] | None:
    return _MARKER_RES[name].search(raw)


def parse_response(raw: str, kpi: str) -> LlmResponse:
    """Extract reasoning and answer from a marker-delimited reply.

    The reasoning marker may be left out only when nothing precedes the answer
    marker, and no marker may appear twice. Every violation raises
    :class:`ResponseFormatError`.
    """
    if not isinstance(raw, str):
        raise ResponseFormatError("reply is not text", "missing_marker")
    for name, pattern in _MARKER_RES.items():
        if len(pattern.findall(raw)) > 1:
            raise ResponseFormatError(f"the {name} marker appears more than once", "duplicate_marker")
    answer_m = _find("answer", raw)
    if answer_m is None:
        raise ResponseFormatError("reply lacks the answer marker", "missing_marker")
    completed_m = _find("completed", raw)
    if completed_m is None:
        raise ResponseFormatError("reply lacks the completed marker", "missing_marker")
    if completed_m.start() < answer_m.end():
        raise ResponseFormatError("completed marker precedes the answer marker", "marker_order")
    reasoning_m = _find("reasoning", raw)
    if reasoning_m is None:
        if raw[: answer_m.start()].strip():
            raise ResponseFormatError("reply lacks the reasoning marker", "missing_marker")
        reasoning = ""
    else:
        if reasoning_m.end() > answer_m.start():
            raise ResponseFormatError("reasoning marker follows the answer marker", "marker_order")
        reasoning = raw[reasoning_m.end(): answer_m.start()].strip()

    body = raw[answer_m.end(): completed_m.start()]
    if kpi == TOTAL_TIME:
        m = _NUMBER_RE.search(body)
        if m is None:
            raise ResponseFormatError(f"answer {body.strip()!r} is not numeric", "non_numeric")
        value = float(m.group(0))
        if value < 0:
            raise ResponseFormatError(f"negative total time {m.group(0)}", "out_of_range")
        answer: int | bool = int(round(value))
    elif kpi == ACTIVITY_OCCURRENCE:
        m = _BOOL_RE.search(body)
        if m is None:
            raise ResponseFormatError(f"answer {body.strip()!r} is not yes/no", "non_boolean")
        answer = m.group(1).lower() in _TRUE_WORDS
    else:
        raise ValueError(f"unknown KPI {kpi!r}")
    return LlmResponse(reasoning, answer, raw)


def format_reply(reasoning: str, answer: int | bool) -> str:
    """Render a reply in the grammar :func:`parse_response` accepts."""
    if isinstance(answer, bool):
        text = "yes" if answer else "no"
    else:
        text = str(answer)
    return f"{REASONING_MARKER}\n{reasoning.strip()}\n\n{ANSWER_MARKER}\n{text}\n{COMPLETED_MARKER}\n"
