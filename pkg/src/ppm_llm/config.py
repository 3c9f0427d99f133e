"""TOML experiment configuration with a closed key schema.

Every table accepts a fixed set of keys; anything else is a
:class:`~ppm_llm.errors.ConfigError`, because a mistyped key would otherwise
silently fall back to a default. Relative paths resolve against the directory
of the config file.

Example::

    [experiment]
    name = "Synthetic"
    log_path = "synthetic_log.csv"
    kpi = "total_time"
    n_train = 100
    repetitions = 3

    [schema]
    domain_background = "..."

    [[schema.attributes]]
    name = "AMOUNT"
    type = "numeric"

    [llm]
    adapter = "echo"
    echo_learner = "knn_act_median"

    [[learners]]
    family = "knn_act"
    aggregation = "median"
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .beta_learners import BetaLearnerSpec, default_specs
from .errors import ConfigError, LogFormatError
from .event_log import CATEGORICAL, GLOBAL, KPIS, Attribute, LogSchema
from .llm_gateway import MODES, LlmEndpointConfig
from .split_sampler import _BIT_GENERATORS

ADAPTERS = ("openai", "gemini", "echo")
PAIRINGS = ("instance", "run")

_EXPERIMENT_KEYS = {
    "name", "log_path", "kpi", "n_train", "repetitions", "seeds", "base_seed", "prng",
    "split_fraction", "hashed", "alpha", "best_window", "pairing", "parse_attempts",
    "max_prompt_chars", "convergence_grid", "annotations", "output_dir",
}
_SCHEMA_KEYS = {"attributes", "target_activity", "domain_background"}
_ATTRIBUTE_KEYS = {"name", "type", "scope", "description"}
_LLM_KEYS = {
    "base_url", "model_name", "api_key_env", "temperature", "timeout", "max_retries",
    "adapter", "concurrency", "backoff_base", "mode", "cache_dir", "echo_learner", "echo_params",
}
_LEARNER_KEYS = {"family", "aggregation", "k", "params"}
_EXTERNAL_KEYS = {"name", "predictions", "all_df"}
_TOP_KEYS = {"experiment", "schema", "llm", "learners", "external"}


@dataclass(frozen=True)
class ExternalSpec:
    """Ingested benchmark predictions; the harness never trains these models."""

    name: str
    predictions: Path  # columns repetition, case_id, prediction
    all_df: Path | None = None  # columns case_id, prediction


@dataclass(frozen=True)
class ExperimentConfig:
    log_path: Path
    schema: LogSchema
    name: str = "experiment"
    n_train: int = 100
    repetitions: int = 20
    seeds: tuple[int, ...] = ()
    prng: str = "pcg64"
    split_fraction: float = 0.8
    hashed: bool = True
    alpha: float = 0.05
    best_window: int | None = 50
    pairing: str = "instance"
    parse_attempts: int = 3
    max_prompt_chars: int | None = None
    convergence_grid: tuple[int, ...] = ()
    annotations: Path | None = None
    output_dir: Path = Path("out")
    llm: LlmEndpointConfig = field(default_factory=LlmEndpointConfig)
    mode: str = "replay"
    cache_dir: Path | None = None
    echo_learner: str | None = None
    echo_params: Mapping[str, Any] = field(default_factory=dict)
    learners: tuple[BetaLearnerSpec, ...] = ()
    external: tuple[ExternalSpec, ...] = ()
    digest: str = ""

    def __post_init__(self) -> None:
        if not self.seeds:
            object.__setattr__(self, "seeds", tuple(range(1, self.repetitions + 1)))
        if len(self.seeds) != self.repetitions:
            raise ConfigError(f"repetitions={self.repetitions} but {len(self.seeds)} seeds given")
        if not self.learners:
            object.__setattr__(self, "learners", tuple(default_specs(self.kpi)))
        for spec in self.learners:
            if spec.is_regression != (self.kpi == "total_time"):
                raise ConfigError(f"learner {spec.id} does not predict {self.kpi}")

    @property
    def kpi(self) -> str:
        return self.schema.kpi

    @property
    def resolved_cache_dir(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.output_dir / "llm_cache"

    def with_overrides(
        self, seed: int | None = None, mode: str | None = None, output_dir: str | Path | None = None
    ) -> "ExperimentConfig":
        """Apply command-line overrides; ``seed`` becomes the first of consecutive seeds."""
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seeds"] = tuple(range(seed, seed + self.repetitions))
        if mode is not None:
            if mode not in MODES:
                raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
            changes["mode"] = mode
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        return replace(self, **changes) if changes else self


def _check_keys(table: Mapping[str, Any], allowed: set[str], where: str) -> None:
    if not isinstance(table, Mapping):
        raise ConfigError(f"{where} must be a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _typed(table: Mapping[str, Any], key: str, types, where: str, default=None):
    if key not in table:
        return default
    value = table[key]
    # bool is an int subclass; do not let true pass for a count
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{where}.{key} has the wrong type")
    if not isinstance(value, types):
        raise ConfigError(f"{where}.{key} has the wrong type")
    return value


def _path(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _schema(raw: Mapping[str, Any], kpi: str) -> LogSchema:
    _check_keys(raw, _SCHEMA_KEYS, "[schema]")
    attributes, descriptions = [], {}
    for i, attr in enumerate(raw.get("attributes", [])):
        where = f"[[schema.attributes]] #{i + 1}"
        _check_keys(attr, _ATTRIBUTE_KEYS, where)
        name = _typed(attr, "name", str, where)
        if not name:
            raise ConfigError(f"{where} needs a name")
        try:
            attributes.append(
                Attribute(name, _typed(attr, "type", str, where, CATEGORICAL), _typed(attr, "scope", str, where, GLOBAL))
            )
        except LogFormatError as exc:
            raise ConfigError(str(exc)) from None
        if "description" in attr:
            descriptions[name] = _typed(attr, "description", str, where)
    try:
        return LogSchema(
            tuple(attributes),
            kpi=kpi,
            target_activity=_typed(raw, "target_activity", str, "[schema]"),
            domain_background=_typed(raw, "domain_background", str, "[schema]"),
            attribute_descriptions=descriptions,
        )
    except LogFormatError as exc:
        raise ConfigError(str(exc)) from None


def _llm(raw: Mapping[str, Any]) -> tuple[LlmEndpointConfig, dict[str, Any]]:
    _check_keys(raw, _LLM_KEYS, "[llm]")
    w = "[llm]"
    defaults = LlmEndpointConfig()
    adapter = _typed(raw, "adapter", str, w, defaults.adapter)
    if adapter not in ADAPTERS:
        raise ConfigError(f"[llm].adapter must be one of {ADAPTERS}, got {adapter!r}")
    endpoint = LlmEndpointConfig(
        base_url=_typed(raw, "base_url", str, w, defaults.base_url),
        model_name=_typed(raw, "model_name", str, w, defaults.model_name),
        api_key_env=_typed(raw, "api_key_env", str, w, defaults.api_key_env),
        temperature=float(_typed(raw, "temperature", (int, float), w, defaults.temperature)),
        timeout=float(_typed(raw, "timeout", (int, float), w, defaults.timeout)),
        max_retries=_typed(raw, "max_retries", int, w, defaults.max_retries),
        adapter=adapter,
        concurrency=_typed(raw, "concurrency", int, w, defaults.concurrency),
        backoff_base=float(_typed(raw, "backoff_base", (int, float), w, defaults.backoff_base)),
    )
    if endpoint.concurrency < 1 or endpoint.max_retries < 0:
        raise ConfigError("[llm].concurrency must be >= 1 and max_retries >= 0")
    mode = _typed(raw, "mode", str, w, "replay")
    if mode not in MODES:
        raise ConfigError(f"[llm].mode must be one of {MODES}, got {mode!r}")
    echo = _typed(raw, "echo_learner", str, w)
    if adapter == "echo" and not echo:
        raise ConfigError("[llm].adapter = 'echo' needs [llm].echo_learner")
    extra = {
        "mode": mode,
        "cache_dir": _typed(raw, "cache_dir", str, w),
        "echo_learner": echo,
        "echo_params": dict(_typed(raw, "echo_params", dict, w, {})),
    }
    return endpoint, extra


def _learners(raw: list, k_default: int | None = None) -> tuple[BetaLearnerSpec, ...]:
    specs = []
    for i, item in enumerate(raw):
        where = f"[[learners]] #{i + 1}"
        _check_keys(item, _LEARNER_KEYS, where)
        try:
            spec = BetaLearnerSpec(
                _typed(item, "family", str, where),
                _typed(item, "aggregation", str, where, "none"),
                _typed(item, "k", int, where, 10),
                dict(_typed(item, "params", dict, where, {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        specs.append(spec)
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate learner ids in [[learners]]: {ids}")
    return tuple(specs)


def parse_config(raw: Mapping[str, Any], base_dir: str | Path = ".", digest: str = "") -> ExperimentConfig:
    base = Path(base_dir)
    _check_keys(raw, _TOP_KEYS, "config")
    exp = raw.get("experiment")
    if exp is None:
        raise ConfigError("missing [experiment] table")
    _check_keys(exp, _EXPERIMENT_KEYS, "[experiment]")
    w = "[experiment]"
    log_path = _typed(exp, "log_path", str, w)
    if not log_path:
        raise ConfigError("[experiment].log_path is required")
    kpi = _typed(exp, "kpi", str, w, "total_time")
    if kpi not in KPIS:
        raise ConfigError(f"[experiment].kpi must be one of {KPIS}, got {kpi!r}")
    schema = _schema(raw.get("schema", {}), kpi)
    endpoint, llm_extra = _llm(raw.get("llm", {}))

    repetitions = _typed(exp, "repetitions", int, w)
    seeds = _typed(exp, "seeds", list, w)
    if seeds is not None:
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise ConfigError("[experiment].seeds must be integers")
        if repetitions is not None and repetitions != len(seeds):
            raise ConfigError(f"[experiment].repetitions={repetitions} but {len(seeds)} seeds given")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("[experiment].seeds must be distinct")
        repetitions = len(seeds)
    else:
        repetitions = 20 if repetitions is None else repetitions
        base_seed = _typed(exp, "base_seed", int, w, 1)
        seeds = list(range(base_seed, base_seed + repetitions))
    if repetitions < 1:
        raise ConfigError("[experiment].repetitions must be >= 1")

    prng = _typed(exp, "prng", str, w, "pcg64")
    if prng not in _BIT_GENERATORS:
        raise ConfigError(f"[experiment].prng must be one of {sorted(_BIT_GENERATORS)}")
    pairing = _typed(exp, "pairing", str, w, "instance")
    if pairing not in PAIRINGS:
        raise ConfigError(f"[experiment].pairing must be one of {PAIRINGS}")
    n_train = _typed(exp, "n_train", int, w, 100)
    alpha = float(_typed(exp, "alpha", (int, float), w, 0.05))
    fraction = float(_typed(exp, "split_fraction", (int, float), w, 0.8))
    attempts = _typed(exp, "parse_attempts", int, w, 3)
    best_window = _typed(exp, "best_window", int, w, 50)
    if n_train < 1 or not 0 < alpha < 1 or not 0 < fraction <= 1 or attempts < 1:
        raise ConfigError("[experiment] values out of range (n_train, alpha, split_fraction or parse_attempts)")
    grid = _typed(exp, "convergence_grid", list, w, [])
    if not all(isinstance(g, int) and not isinstance(g, bool) and g >= 1 for g in grid):
        raise ConfigError("[experiment].convergence_grid must be positive integers")

    external = []
    for i, item in enumerate(raw.get("external", [])):
        where = f"[[external]] #{i + 1}"
        _check_keys(item, _EXTERNAL_KEYS, where)
        name = _typed(item, "name", str, where)
        preds = _typed(item, "predictions", str, where)
        if not name or not preds:
            raise ConfigError(f"{where} needs name and predictions")
        external.append(ExternalSpec(name, _path(base, preds), _path(base, _typed(item, "all_df", str, where))))

    kwargs = dict(
        log_path=_path(base, log_path),
        schema=schema,
        name=_typed(exp, "name", str, w, "experiment"),
        n_train=n_train,
        repetitions=repetitions,
        seeds=tuple(seeds),
        prng=prng,
        split_fraction=fraction,
        hashed=_typed(exp, "hashed", bool, w, True),
        alpha=alpha,
        best_window=best_window if best_window and best_window > 0 else None,
        pairing=pairing,
        parse_attempts=attempts,
        max_prompt_chars=_typed(exp, "max_prompt_chars", int, w),
        convergence_grid=tuple(grid),
        annotations=_path(base, _typed(exp, "annotations", str, w)),
        output_dir=_path(base, _typed(exp, "output_dir", str, w, "out")),
        llm=endpoint,
        mode=llm_extra["mode"],
        cache_dir=_path(base, llm_extra["cache_dir"]),
        echo_learner=llm_extra["echo_learner"],
        echo_params=llm_extra["echo_params"],
        learners=_learners(raw.get("learners", [])),
        external=tuple(external),
        digest=digest,
    )
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    # the digest covers the parsed content, not formatting or the file location
    digest = hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode()).hexdigest()
    return parse_config(raw, path.parent, digest)
