"""Semantic hashing of context-sensitive strings.

The context set holds every activity name, every categorical value of a global
attribute and every global attribute name. Each token is mapped to an opaque
four-symbol identifier over ``A-Z0-9`` so that equal strings stay equal while
their meaning is lost.
"""

from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .event_log import CATEGORICAL, EventLog, LogSchema

ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
IDENTIFIER_LENGTH = 4
IDENTIFIER_RE = re.compile(r"^[A-Z0-9]{4}$")


@dataclass(frozen=True)
class ContextSet:
    tokens: frozenset[str]

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(sorted(self.tokens))


def build_context_set(log: EventLog, schema: LogSchema | None = None) -> ContextSet:
    schema = schema or log.schema
    tokens = set(log.alphabet)
    for attribute in schema.global_attributes:
        tokens.add(attribute.name)
        if attribute.value_type == CATEGORICAL:
            for trace in log.traces:
                for event in trace.events[:1]:
                    tokens.add(str(event.attrs[attribute.name]))
    if schema.target_activity:
        tokens.add(schema.target_activity)
    tokens.discard("")
    return ContextSet(frozenset(tokens))


def _base36(number: int) -> str:
    if number == 0:
        return ALPHABET[0]
    digits = []
    while number:
        number, rem = divmod(number, 36)
        digits.append(ALPHABET[rem])
    return "".join(reversed(digits))


def hash_token(token: str, salt: str = "", counter: int = 0) -> str:
    """First four base-36 symbols of SHA-256(salt || token), for ``counter`` 0.

    Higher counters re-digest with a ``#<counter>`` suffix and are used only to
    resolve collisions.
    """
    if not token:
        raise ValueError("cannot hash an empty token")
    material = salt + token if counter == 0 else f"{salt}{token}#{counter}"
    digest = int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest(), "big")
    return _base36(digest)[:IDENTIFIER_LENGTH].rjust(IDENTIFIER_LENGTH, ALPHABET[0])


@dataclass(frozen=True)
class HashMapping:
    mapping: Mapping[str, str]
    salt: str = ""

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> dict[str, str]:
        return {v: k for k, v in self.mapping.items()}

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["token", "identifier"])
            for token in sorted(self.mapping):
                writer.writerow([token, self.mapping[token]])

    @classmethod
    def from_csv(cls, path: str | Path, salt: str = "") -> "HashMapping":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        mapping = {r["token"]: r["identifier"] for r in rows}
        if len(set(mapping.values())) != len(mapping):
            raise ValueError(f"{path}: mapping is not injective")
        return cls(mapping, salt)


def build_mapping(tokens: Iterable[str], salt: str = "") -> HashMapping:
    """Injective identifier assignment; tokens are processed in sorted order.

    Identifiers made only of digits are skipped like collisions so that hashed
    names can never be mistaken for the minute counts in a prompt.
    """
    mapping: dict[str, str] = {}
    used: set[str] = set()
    for token in sorted(set(tokens)):
        counter = 0
        ident = hash_token(token, salt)
        while ident in used or ident.isdigit():
            counter += 1
            ident = hash_token(token, salt, counter)
        mapping[token] = ident
        used.add(ident)
    return HashMapping(mapping, salt)


def _pattern(tokens: Iterable[str]) -> re.Pattern[str] | None:
    # longest first, and a word-character token must not sit inside a longer word
    alts = []
    for tok in sorted(tokens, key=lambda t: (-len(t), t)):
        p = re.escape(tok)
        if re.match(r"\w", tok[0]):
            p = r"(?<!\w)" + p
        if re.match(r"\w", tok[-1]):
            p = p + r"(?!\w)"
        alts.append(p)
    return re.compile("|".join(alts)) if alts else None


def _replace(text: str, table: Mapping[str, str]) -> str:
    pattern = _pattern(table)
    if pattern is None:
        return text
    return pattern.sub(lambda m: table[m.group(0)], text)


def anonymize_prompt(prompt: str, mapping: HashMapping) -> str:
    """Replace every context-set token by its identifier in a single pass."""
    return _replace(prompt, mapping.mapping)


def deanonymize_prompt(prompt: str, mapping: HashMapping) -> str:
    return _replace(prompt, mapping.inverse())


def find_tokens(text: str, tokens: Iterable[str]) -> list[str]:
    """Context-set tokens that still occur in ``text`` under the replacement rules."""
    pattern = _pattern(tokens)
    if pattern is None:
        return []
    return sorted({m.group(0) for m in pattern.finditer(text)})
