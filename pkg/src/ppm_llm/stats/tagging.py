"""Rule-based assignment of an LLM reasoning text to a beta-learner family.

Each family owns a list of cue patterns; the family with most cue hits wins
and ties go to the earlier family in the list. Regression tags also need an
aggregation cue (mean/average, median, mode/most frequent), otherwise the
text stays ``untagged``. Manual annotations read from a sidecar CSV always
take precedence.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Iterable, Mapping

from ..event_log import TOTAL_TIME

UNTAGGED = "untagged"

_ATTRIBUTE_CUES = [
    r"\battributes?\b",
    r"\brange (?:around|of|between)\b",
    r"\bfilter(?:ed|ing)? (?:for|by|on) similar\b",
    r"\bsimilar (?:amount|value|type|attribute|characteristics)",
    r"\brequested amount\b",
    r"\bsame (?:category|type|value)\b",
]

_REGRESSION_CUES = {
    "knn_act": [
        r"\bactivity counts?\b",
        r"\bnumber of times each activity\b",
        r"\bcount(?:s|ed)? (?:of|how often) (?:each |the )?activit",
        r"\bactivity (?:profile|frequenc)",
        r"\bsame activities\b",
        r"\bsimilar activities\b",
    ],
    "knn_att": _ATTRIBUTE_CUES,
    "time_seq": [
        r"\belapsed\b",
        r"\btiming\b",
        r"\btemporal\b",
        r"\btime (?:sequence|profile|stamps?)\b",
        r"\bduration so far\b",
        r"\bhow (?:fast|quickly)\b",
    ],
    "path_pred": [
        r"\bpaths?\b",
        r"\bcontinuations?\b",
        r"\bremaining activities\b",
        r"\bfuture activities\b",
        r"\bnext activit",
        r"\bextend(?:s|ing)? (?:the|this) (?:prefix|sequence)\b",
        r"\bsame (?:sequence|order) of activities\b",
    ],
}

_CLASSIFICATION_CUES = {
    "positive_evidence": [
        r"\balready (?:occurred|happened|been executed|executed|present|appears|performed)\b",
        r"\bhas already\b",
        r"\bis already\b",
    ],
    "state_based": [
        r"\blast (?:event|activity)\b",
        r"\bcurrent (?:state|activity)\b",
        r"\bmost recent activity\b",
    ],
    "activity_based": [
        r"\bsequence of activities\b",
        r"\bactivity sequence\b",
        r"\bsimilar (?:activity )?sequences?\b",
        r"\bactivities executed\b",
        r"\bsame activities\b",
    ],
    "att_based": _ATTRIBUTE_CUES,
}

_AGGREGATION_CUES = {
    "median": [r"\bmedian\b"],
    "mean": [r"\bmean\b", r"\baverage\b", r"\baveraging\b"],
    "mode": [r"\bmode\b", r"\bmost (?:frequent|common)\b"],
}


def _hits(text: str, patterns: Iterable[str]) -> int:
    return sum(len(re.findall(p, text, flags=re.IGNORECASE)) for p in patterns)


def tag_reasoning(reasoning: str, kpi: str = TOTAL_TIME, attribute_names: Iterable[str] = ()) -> str:
    """Best-matching beta-learner id for a reasoning text, or ``untagged``.

    ``attribute_names`` (quoted global attribute names) count as extra
    attribute cues.
    """
    text = reasoning or ""
    if not text.strip():
        return UNTAGGED
    extra = [re.escape(n) for n in attribute_names if n]
    table = _REGRESSION_CUES if kpi == TOTAL_TIME else _CLASSIFICATION_CUES
    scores = {}
    for family, cues in table.items():
        hits = _hits(text, cues)
        if family in ("knn_att", "att_based"):
            hits += _hits(text, extra)
        scores[family] = hits
    family = max(scores, key=lambda f: scores[f])  # first maximum wins
    if scores[family] == 0:
        return UNTAGGED
    if kpi != TOTAL_TIME:
        return family
    agg_scores = {a: _hits(text, cues) for a, cues in _AGGREGATION_CUES.items()}
    agg = max(agg_scores, key=lambda a: agg_scores[a])
    if agg_scores[agg] == 0:
        return UNTAGGED
    return f"{family}_{agg}"


def load_annotations(path: str | Path) -> dict[str, str]:
    """Manual ``case_id,family`` annotations."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"case_id", "family"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns case_id,family")
        return {row["case_id"]: row["family"].strip() for row in reader}


def tag_with_overrides(
    case_id: str,
    reasoning: str,
    overrides: Mapping[str, str],
    kpi: str = TOTAL_TIME,
    attribute_names: Iterable[str] = (),
) -> str:
    if case_id in overrides:
        return overrides[case_id]
    return tag_reasoning(reasoning, kpi, attribute_names)
