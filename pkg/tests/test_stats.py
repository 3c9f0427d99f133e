from __future__ import annotations

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from helpers import random_log
from ppm_llm.errors import DegenerateInputError
from ppm_llm.mock_llm import LearnerEcho
from ppm_llm.beta_learners import default_specs
from ppm_llm.event_log import ACTIVITY_OCCURRENCE, TOTAL_TIME
from ppm_llm.stats import (
    UNTAGGED,
    convergence_curve,
    counts_from_tags,
    critical_difference,
    f1,
    friedman_nemenyi,
    good_turing,
    ks_statistic,
    mae,
    significance_stars,
    tag_reasoning,
    tag_with_overrides,
    wilcoxon_signed_rank,
)


def enumeration_p(d):
    """Two-sided p by listing every sign vector over the ranks of |d|."""
    d = [x for x in d if x != 0]
    ranks = sps.rankdata(np.abs(d))
    observed = min(ranks[np.asarray(d) > 0].sum(), ranks[np.asarray(d) < 0].sum())
    hits = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        w = sum(r for r, s in zip(ranks, signs) if s)
        hits += min(w, ranks.sum() - w) <= observed + 1e-9
    return hits / 2 ** len(d)


# metrics -----------------------------------------------------------------

def test_mae_and_f1_examples():
    assert mae([(10, 12), (5, 5), (0, 3)]).value == pytest.approx(5 / 3)
    r = f1([(True, True), (True, True), (False, True), (True, False)])
    assert r.value == pytest.approx(2 / 3) and not r.degenerate
    z = f1([(False, False), (True, False)])
    assert z.value == 0.0 and z.degenerate
    for fn in (mae, f1):
        with pytest.raises(DegenerateInputError):
            fn([])
    with pytest.raises(ValueError):
        mae([(1.0, math.nan)])


# wilcoxon ----------------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=5, max_size=12))
def test_wilcoxon_matches_enumeration(d):
    if sum(x != 0 for x in d) < 5:
        with pytest.raises(DegenerateInputError):
            wilcoxon_signed_rank(d, [0] * len(d))
        return
    res = wilcoxon_signed_rank(d, [0] * len(d))
    assert res.method == "exact"
    assert abs(res.p_value - min(1.0, enumeration_p(d))) < 1e-12


def test_wilcoxon_examples():
    r = wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], [0] * 6)
    assert r.statistic == 0 and r.p_value == 0.03125 and r.reject
    sym = wilcoxon_signed_rank([1, -1, 2, -2, 3, -3], [0] * 6)
    assert sym.p_value == 1.0 and not sym.reject
    with pytest.raises(DegenerateInputError):
        wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1])


def test_wilcoxon_normal_branch_agrees_with_scipy():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=60), rng.normal(0.3, size=60)
    r = wilcoxon_signed_rank(a, b)
    ref = sps.wilcoxon(a, b, method="approx", correction=False)
    assert r.method == "normal" and r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


# friedman / nemenyi ------------------------------------------------------

def test_friedman_identical_columns_retain():
    col = np.arange(12, dtype=float)
    r = friedman_nemenyi(np.column_stack([col, col, col]))
    assert r.decision == "retain" and r.p_value == 1.0
    with pytest.raises(DegenerateInputError):
        friedman_nemenyi(np.ones((4, 3)))


def test_friedman_dominated_column_rejects():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(10, 3))
    base[:, 2] = base.max(axis=1) + 1
    r = friedman_nemenyi(base)
    assert r.reject
    worst = {(p["i"], p["j"]): p for p in r.extra["pairs"]}
    # column 2 always ranks last; 0 and 1 share ranks 1-2
    assert worst[(0, 2)]["rank_diff"] < 0 and worst[(1, 2)]["rank_diff"] < 0
    assert worst[(0, 2)]["reject"] or worst[(1, 2)]["reject"]


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(2, 15), st.integers(0, 2**32 - 1))
def test_friedman_statistic_matches_scipy(k, n, seed):
    x = np.random.default_rng(seed).integers(0, 4, size=(n, k)).astype(float)
    if np.all(x == x.flat[0]) or k < 3:
        return
    ours = friedman_nemenyi(x)
    ref = sps.friedmanchisquare(*x.T)
    if not math.isfinite(ref.statistic):
        return
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)


def test_critical_difference():
    assert abs(critical_difference(3, 10) - 2.343 * math.sqrt(12 / 60)) < 1e-9
    assert critical_difference(12, 20) > critical_difference(10, 20)
    assert [significance_stars(p) for p in (0.0001, 0.005, 0.04, 0.05)] == ["***", "**", "*", "ns"]


# good-turing -------------------------------------------------------------

def test_good_turing_examples():
    est = good_turing({"A": 3, "B": 1, "C": 1})
    assert est.p0 == 0.4 and est.expected_novel(10) == 4.0
    assert est.p_star[1] == 0.0 and est.stranded_mass == pytest.approx(0.6)
    assert est.raw_total + est.stranded_mass == pytest.approx(1.0)
    assert good_turing({"A": 2, "B": 3}).p0 == 0
    assert [est.expected[m] for m in (1, 10, 100)] == [0.4, 4.0, 40.0]
    with pytest.raises(DegenerateInputError):
        good_turing({})


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=3), st.integers(1, 6), min_size=1, max_size=12))
def test_good_turing_mass_identities(counts):
    est = good_turing(counts)
    assert est.raw_total + est.stranded_mass == pytest.approx(1.0)
    normalized = sum(est.N_r[r] * est.p_star_normalized[r] for r in est.N_r) + est.p0
    assert normalized == pytest.approx(1.0)
    for m in (1, 10, 100):
        assert est.expected_novel(m) == pytest.approx(m * est.expected_novel(1))


def test_counts_from_tags():
    assert counts_from_tags(["a", "b", "a", UNTAGGED]) == {"a": 2, "b": 1}


# tagging -----------------------------------------------------------------

@pytest.mark.parametrize("spec", default_specs(TOTAL_TIME) + default_specs(ACTIVITY_OCCURRENCE), ids=lambda s: s.id)
def test_tagger_recognises_mock_templates(spec):
    kpi = TOTAL_TIME if spec.is_regression else ACTIVITY_OCCURRENCE
    text = LearnerEcho(spec).reasoning(SimpleNamespace(k=10), 1234 if spec.is_regression else True)
    assert tag_reasoning(text, kpi) == spec.id


def test_tagger_edge_cases():
    assert tag_reasoning("", TOTAL_TIME) == UNTAGGED
    assert tag_reasoning("I just guessed.", TOTAL_TIME) == UNTAGGED
    text = "Cases with a similar amount had a median duration of 300 minutes."
    assert tag_reasoning(text, TOTAL_TIME, ["amount"]) == "knn_att_median"
    assert tag_with_overrides("c1", text, {"c1": "manual"}) == "manual"


# convergence -------------------------------------------------------------

def test_ks_statistic_against_scipy():
    rng = np.random.default_rng(2)
    a, b = rng.integers(0, 30, 40).tolist(), rng.integers(0, 30, 70).tolist()
    assert ks_statistic(a, b) == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)
    assert ks_statistic([1, 2], [1, 2]) == 0


def test_convergence_curve_ends_at_zero():
    log = random_log(np.random.default_rng(0), 40)
    curve = convergence_curve(log, None, [1, 10, 40], seed=3)
    assert [n for n, _ in curve] == [1, 10, 40]
    assert curve[-1][1] == 0.0
    assert curve == convergence_curve(log, None, [1, 10, 40], seed=3)
    with pytest.raises(ValueError):
        convergence_curve(log, None, [41], seed=3)
