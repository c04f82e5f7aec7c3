from __future__ import annotations

import json
from fractions import Fraction

import pytest
from helpers import scenario_ratios
from hypothesis import given
from hypothesis import strategies as st

from claimeval.fixtures import (
    SCENARIOS_PATH,
    SMOKE_PATH,
    RandomBounds,
    random_instance,
    scenario_catalog,
)
from claimeval.model import load_dataset
from claimeval.segment import cite_sentences


def test_catalog_has_every_scenario():
    names = [s.name for s in scenario_catalog()]
    assert names == ["exam_layout_output1", "exam_layout_output2", "exam_recall_output1", "exam_recall_output2",
                     "case_rouge_output1", "case_rouge_output2", "murmur_citation"]


@pytest.mark.parametrize("scenario", scenario_catalog(), ids=lambda s: s.name)
def test_scenarios_reproduce_expected_ratios(scenario):
    got = scenario_ratios(scenario)
    for metric, (n, d) in scenario.expected.items():
        assert (got[metric].numerator, got[metric].denominator) == (n, d), metric


def test_murmur_citation_detail():
    murmur = next(s for s in scenario_catalog() if s.name == "murmur_citation")
    prec = scenario_ratios(murmur)["citation_precision"]
    assert prec.ratio == Fraction(2, 3) and prec.formatted == "66.67"
    assert [d.outcome for d in prec.detail] == ["1", "1", "0"]


def test_shipped_files_parse():
    assert len(load_dataset(SCENARIOS_PATH)) == 7
    smoke = load_dataset(SMOKE_PATH)
    assert [i.id for i in smoke] == [f"smoke-{k}" for k in range(1, 6)]
    assert all(any(s.citations for s in cite_sentences(i.output_text)) for i in smoke)


@given(st.integers(0, 10**9))
def test_random_instance_is_deterministic(seed):
    a, b = random_instance(seed), random_instance(seed)
    assert a.instance == b.instance and a.truth == b.truth
    assert [c.text for c in a.claims] == [c.text for c in b.claims]


def test_different_seeds_differ_and_tuple_unpacking():
    inst, claims, table = random_instance(1)
    assert inst != random_instance(2).instance
    assert claims and table.id


def test_minimal_bounds():
    for seed in range(50):
        sc = random_instance(seed, RandomBounds(1, 1, 1))
        assert len(sc.truth.sentences) == 1 and len(sc.truth.reference_claim_words) == 1
        assert len(sc.truth.sentences[0].citations) <= 1


@pytest.mark.parametrize("kw", [{"max_claims": 0}, {"max_sentences": 99}, {"max_citations": -1}])
def test_bounds_validation(kw):
    with pytest.raises(ValueError):
        RandomBounds(**kw)


def test_expected_file_matches_catalog_keys():
    from claimeval.fixtures import SCENARIO_EXPECTED_PATH
    assert set(json.loads(SCENARIO_EXPECTED_PATH.read_text())) == {s.name for s in scenario_catalog()}
