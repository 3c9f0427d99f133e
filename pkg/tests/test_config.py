from __future__ import annotations

from pathlib import Path

import pytest

from ppm_llm.config import load_config, parse_config
from ppm_llm.errors import ConfigError
from ppm_llm.synthetic import bundled_path


def _raw(**experiment):
    exp = {"log_path": "log.csv", "repetitions": 2}
    exp.update(experiment)
    return {"experiment": exp}


def test_bundled_configs_load():
    for name in ("synthetic_total_time.toml", "synthetic_occurrence.toml", "synthetic_self_check.toml"):
        cfg = load_config(bundled_path(name))
        assert cfg.log_path.is_file()
        assert cfg.seeds == (1, 2, 3) and cfg.n_train == 100
        assert len(cfg.digest) == 64
    occ = load_config(bundled_path("synthetic_occurrence.toml"))
    assert occ.kpi == "activity_occurrence" and occ.schema.target_activity
    assert len(occ.learners) == 4


def test_defaults_and_relative_paths():
    cfg = parse_config(_raw(), base_dir="/data")
    assert cfg.log_path == Path("/data/log.csv")
    assert cfg.seeds == (1, 2)
    assert cfg.resolved_cache_dir == Path("/data/out/llm_cache")
    assert len(cfg.learners) == 12 and cfg.hashed and cfg.pairing == "instance"
    assert cfg.mode == "replay" and cfg.llm.temperature == 0.0


def test_overrides():
    cfg = parse_config(_raw(base_seed=7), base_dir="/d")
    assert cfg.seeds == (7, 8)
    o = cfg.with_overrides(seed=40, mode="record", output_dir="/tmp/x")
    assert o.seeds == (40, 41) and o.mode == "record" and o.resolved_cache_dir == Path("/tmp/x/llm_cache")
    with pytest.raises(ConfigError):
        cfg.with_overrides(mode="sometimes")


@pytest.mark.parametrize(
    "raw",
    [
        {"experiment": {"log_path": "x"}, "extra": {}},
        _raw(n_trian=5),
        {**_raw(), "llm": {"tempreature": 0}},
        {**_raw(), "schema": {"attributes": [{"name": "a", "kind": "numeric"}]}},
        {**_raw(), "learners": [{"family": "knn_act", "agg": "mean"}]},
        _raw(kpi="waiting_time"),
        _raw(n_train=True),
        _raw(seeds=[1, 1]),
        _raw(seeds=[1, 2, 3]),
        _raw(pairing="block"),
        _raw(alpha=1.5),
        {**_raw(), "llm": {"adapter": "echo"}},
        {**_raw(), "llm": {"mode": "offline"}},
        {**_raw(), "learners": [{"family": "knn_act", "aggregation": "mean"}] * 2},
        {**_raw(kpi="activity_occurrence"), "learners": [{"family": "knn_act", "aggregation": "mean"}]},
        {"schema": {}},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_digest_ignores_formatting(tmp_path):
    a, b = tmp_path / "a.toml", tmp_path / "b.toml"
    a.write_text('[experiment]\nlog_path = "l.csv"\nrepetitions = 1\n')
    b.write_text('# comment\n[experiment]\nrepetitions = 1\nlog_path   =   "l.csv"\n')
    assert load_config(a).digest == load_config(b).digest
