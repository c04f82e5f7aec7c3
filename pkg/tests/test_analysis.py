from __future__ import annotations

import itertools
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import kendall_tau_b_bruteforce, spearman_bruteforce
from scipy import stats as scipy_stats

from claimeval.analysis import (
    PreferencePair,
    ScoreVector,
    Stat,
    UndefinedCorrelation,
    average_ranks,
    correlation_matrix,
    find_disagreements,
    human_agreement,
    human_metric_correlation,
    kendall_tau,
    majority_preference,
    score_vectors,
    spearman_rho,
)
from claimeval.model import AnnotationRecord, MetricReport


def test_trivial_correlations():
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman_rho([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_undefined_and_bad_inputs():
    with pytest.raises(UndefinedCorrelation):
        kendall_tau([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelation):
        spearman_rho([1, 2, 3], [5, 5, 5])
    with pytest.raises(ValueError):
        kendall_tau([1], [1])
    with pytest.raises(ValueError):
        spearman_rho([1, 2], [1, 2, 3])


def test_average_ranks():
    assert list(average_ranks([10, 20, 20, 30])) == [1, 2.5, 2.5, 4]


def test_kendall_matches_scipy_tau_b():
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(3, 12)
        x = [rng.randint(0, 3) for _ in range(n)]
        y = [rng.randint(0, 3) for _ in range(n)]
        try:
            ours = kendall_tau(x, y)
        except UndefinedCorrelation:
            continue
        assert ours == pytest.approx(scipy_stats.kendalltau(x, y).statistic, abs=1e-12)
        assert spearman_rho(x, y) == pytest.approx(scipy_stats.spearmanr(x, y).statistic, abs=1e-9)


_vec = st.lists(st.integers(0, 4), min_size=3, max_size=9)


@given(_vec.flatmap(lambda x: st.tuples(st.just(x), st.lists(st.integers(0, 4), min_size=len(x), max_size=len(x)))))
def test_rank_stats_invariant_under_monotone_transform(xy):
    x, y = xy
    try:
        tau, rho = kendall_tau(x, y), spearman_rho(x, y)
    except UndefinedCorrelation:
        return
    tx = [math.exp(v) + 3 * v for v in x]
    assert kendall_tau(tx, y) == pytest.approx(tau, abs=1e-12)
    assert spearman_rho(tx, y) == pytest.approx(rho, abs=1e-9)
    assert kendall_tau(x, y) == pytest.approx(kendall_tau_b_bruteforce(x, y), abs=1e-12)
    assert spearman_rho(x, y) == pytest.approx(spearman_bruteforce(x, y), abs=1e-9)


def test_small_permutations_exhaustive():
    for n in range(2, 6):
        base = list(range(n))
        for perm in itertools.permutations(base):
            assert kendall_tau(base, perm) == pytest.approx(kendall_tau_b_bruteforce(base, perm), abs=1e-12)


def _vectors():
    a = ScoreVector("a", (("1", 10), ("2", 20), ("3", 30), ("4", 40)))
    b = ScoreVector("b", (("1", 40), ("2", 30), ("3", 20), ("4", 10)))
    c = ScoreVector("c", (("2", 1), ("3", 3), ("4", 2), ("5", 9)))
    d = ScoreVector("d", (("9", 1), ("8", 2)))
    return [a, b, c, d]


def test_correlation_matrix_cells():
    m = correlation_matrix(_vectors(), Stat.KENDALL)
    assert m.get("a", "a") == 1.0 and m.get("a", "b") == -1.0
    assert m.get("a", "c") == pytest.approx(kendall_tau([20, 30, 40], [1, 3, 2]))
    assert m.get("a", "d") is None
    assert m.support[0][2] == 3
    for i in range(4):
        for j in range(4):
            assert m.cells[i][j] == m.cells[j][i]
    assert "metric_a,metric_b,coefficient,n,stat" in m.to_long_csv()
    assert m.to_long_csv().splitlines()[1].endswith("tau-b")


def test_correlation_matrix_permutation_consistent():
    vs = _vectors()
    m1 = correlation_matrix(vs, Stat.SPEARMAN)
    m2 = correlation_matrix(list(reversed(vs)), Stat.SPEARMAN)
    for a in "abcd":
        for b in "abcd":
            assert m1.get(a, b) == m2.get(a, b)


def test_score_vector_validation_and_from_reports():
    with pytest.raises(ValueError):
        ScoreVector("m", (("1", 1), ("1", 2)))
    vecs = score_vectors([MetricReport("x", "m", 1, 2), MetricReport("__mean__", "m", 1, 2)])
    assert vecs[0].scores == (("x", 50.0),)


def _pair(pid, a, b, **kw):
    return PreferencePair(pid, pid, a, b, **kw)


def test_find_disagreements_sign_rule():
    pairs = [
        _pair("opp", {"x": 1, "y": 0}, {"x": 0, "y": 1}),
        _pair("same", {"x": 1, "y": 1}, {"x": 0, "y": 0}),
        _pair("tie", {"x": 1, "y": 1}, {"x": 1, "y": 0}),
    ]
    assert [p.pair_id for p in find_disagreements(pairs, "x", "y")] == ["opp"]
    assert {p.pair_id for p in find_disagreements(pairs, "y", "x")} == {"opp"}


def _ann(pid, votes, scores=None):
    scores = scores or [(50, 50)] * len(votes)
    return [AnnotationRecord(pid, f"e{i}", sa, sb, v) for i, (v, (sa, sb)) in enumerate(zip(votes, scores))]


def test_majority_and_even_count():
    assert majority_preference(_ann("p", "aab")) == "a"
    with pytest.raises(ValueError):
        majority_preference(_ann("p", "ab"))
    assert majority_preference(_ann("p", "ab"), "exclude") is None


def test_human_agreement_hand_count():
    # 10 pairs: 1 metric tie, 9 strict preferences, 7 of which match the majority
    votes = ["aab", "abb", "aaa", "bbb", "aba", "bba", "aab", "bab", "aaa", "abb"]
    metric_pref = [None, "b", "a", "b", "a", "b", "b", "a", "a", "b"]
    pairs, anns = [], []
    for i, (v, m) in enumerate(zip(votes, metric_pref)):
        a, b = {None: (5, 5), "a": (9, 1), "b": (1, 9)}[m]
        pairs.append(_pair(f"p{i}", {"m": a}, {"m": b}))
        anns += _ann(f"p{i}", v)
    res = human_agreement(pairs, anns, "m")
    assert res.metric_ties == ("p0",)
    assert (res.n_agree, res.n_compared, res.fraction) == (7, 9, "77.78")
    rev = human_agreement(pairs, list(reversed(anns)), "m")
    assert rev.fraction == res.fraction


def test_all_tied_metric_gives_empty_denominator():
    pairs = [_pair("p", {"m": 1}, {"m": 1})]
    res = human_agreement(pairs, _ann("p", "aab"), "m")
    assert res.n_compared == 0 and res.fraction is None and res.to_report().degenerate


def test_human_metric_correlation():
    scores = [(100, 40), (20, 60), (80, 90), (10, 30)]
    pairs, anns = [], []
    for i, (sa, sb) in enumerate(scores):
        pairs.append(_pair(f"p{i}", {"m": sa, "inv": 100 - sa}, {"m": sb, "inv": 100 - sb},
                           group="g1" if i < 2 else "g2"))
        anns += _ann(f"p{i}", "aab", [(sa, sb)] * 3)
    assert human_metric_correlation(pairs, anns, "m") == (pytest.approx(1.0), pytest.approx(1.0))
    assert human_metric_correlation(pairs, anns, "inv") == (pytest.approx(-1.0), pytest.approx(-1.0))
    grouped = human_metric_correlation(pairs, anns, "m", group_key=lambda p: p.group)
    assert set(grouped) == {"g1", "g2"}


def test_human_metric_correlation_8_outputs_bruteforce():
    machine = [(60, 20), (20, 20), (100, 50), (33, 67)]
    human = [(70, 30), (40, 10), (90, 90), (20, 80)]
    pairs, anns = [], []
    for i, ((ma, mb), (ha, hb)) in enumerate(zip(machine, human)):
        pairs.append(_pair(f"p{i}", {"m": ma}, {"m": mb}))
        anns += _ann(f"p{i}", "abb", [(ha, hb)] * 3)
    flat_m = [v for pair in machine for v in pair]
    flat_h = [v for pair in human for v in pair]
    rho, tau = human_metric_correlation(pairs, anns, "m")
    assert rho == pytest.approx(spearman_bruteforce(flat_m, flat_h), abs=1e-9)
    assert tau == pytest.approx(kendall_tau_b_bruteforce(flat_m, flat_h), abs=1e-12)
