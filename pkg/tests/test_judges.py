from __future__ import annotations

import json

import httpx
import pytest

from claimeval.gateway import CacheMode, Gateway, GatewayError, ReplayMiss
from claimeval.judges import (
    CitationSupportResult,
    Judge,
    JudgmentError,
    LexicalOracleJudge,
    LLMJudge,
    RecordedJudge,
    RecordMiss,
    content_tokens,
    extract_claims,
    judge_entailment,
    judge_entailment_3way,
    select_supporting_citations,
    sentence_claims,
    text_hash,
)
from claimeval.model import ClaimSource, DataError, Entailment, NliLabel
from claimeval.prompts import PromptConfig, PromptStyle, Task
from claimeval.segment import parse_citations

UNITS = ["(doctor) lungs sound clear.", "(doctor) a soft murmur is heard.", "(patient) my knee hurts."]


def test_content_tokens_drop_stopwords():
    assert content_tokens("The lungs ARE clear, and the heart is fine.") == {"lungs", "clear", "heart", "fine"}


def test_lexical_oracle_rule():
    j = LexicalOracleJudge()
    assert judge_entailment(j, "Lungs are clear bilaterally.", "The lungs are clear.").entailed
    assert not judge_entailment(j, "Lungs are clear.", "Heart is clear.").entailed
    assert judge_entailment_3way(j, "a b", "c").label is NliLabel.NEUTRAL
    assert judge_entailment_3way(j, "lungs clear", "lungs").label is NliLabel.ENTAILMENT


def test_lexical_citation_support():
    j = LexicalOracleJudge()
    s = parse_citations("Lungs clear, soft murmur. [0][1][2]")
    res = select_supporting_citations(j, s, UNITS)
    assert res.entailed and res.supporting == {0, 1}
    s2 = parse_citations("Knee swelling. [2]")
    assert not select_supporting_citations(j, s2, UNITS).entailed


def test_preconditions():
    j = LexicalOracleJudge()
    with pytest.raises(ValueError):
        judge_entailment(j, "", "x")
    with pytest.raises(ValueError):
        select_supporting_citations(j, parse_citations("No cites."), UNITS)
    with pytest.raises(ValueError):
        select_supporting_citations(j, parse_citations("Bad. [9]"), UNITS)
    with pytest.raises(ValueError):
        extract_claims(j, "   ")


def test_hallucinated_supporting_indices_are_dropped():
    class Liar(Judge):
        id = "liar"

        def select_supporting(self, sentence, units):
            return CitationSupportResult(True, frozenset({0, 2}))

    res = select_supporting_citations(Liar(), parse_citations("X. [0]"), UNITS)
    assert res.supporting == {0} and res.hallucinated == (2,)


def test_sentence_claims_skip_headings():
    claims = sentence_claims("EXAM\n• Lungs: clear. [0]\n• Heart: murmur.", ClaimSource.OUTPUT)
    assert [c.text for c in claims] == ["• Lungs: clear.", "• Heart: murmur."]
    assert [c.text for c in sentence_claims("EXAM", "reference")] == ["EXAM"]


def test_recorded_judge_roundtrip(tmp_path):
    j = RecordedJudge("t")
    j.add_verdict("premise text", "hyp one", "entailed")
    j.add_verdict("premise text", "hyp two", NliLabel.CONTRADICTION)
    j.add_claims("passage", ["c1", "c2"])
    j.add_support_for(parse_citations("S. [1][0]"), UNITS, True, [1])
    j.save(tmp_path / "v.jsonl")
    back = RecordedJudge.load(tmp_path / "v.jsonl")
    assert back.entail("premise   text", "hyp one").entailed
    assert back.entail("premise text", "hyp two").label is Entailment.NOT_ENTAILED
    assert back.entail_3way("premise text", "hyp two").label is NliLabel.CONTRADICTION
    assert back.entail_3way("premise text", "hyp one").label is NliLabel.ENTAILMENT
    assert [c.text for c in back.extract_claims("passage", ClaimSource.REFERENCE)] == ["c1", "c2"]
    assert back.select_supporting(parse_citations("S. [1][0]"), UNITS).supporting == {1}
    with pytest.raises(RecordMiss):
        back.entail("premise text", "unknown")


def test_recorded_judge_raw_text_and_claim_table(tmp_path):
    p = tmp_path / "v.jsonl"
    p.write_text(
        json.dumps({"premise": "P", "hypothesis": "H", "label": "neutral"}) + "\n"
        + json.dumps({"kind": "claim_table", "premise": "Out", "claims": ["a", "b"],
                      "labels": {"0": "entailed", "1": "not_entailed"}}) + "\n"
        + json.dumps({"premise_hash": text_hash("Q"), "hypothesis_hash": text_hash("H"), "label": "entailed"}) + "\n"
    )
    j = RecordedJudge.load(p)
    assert j.entail_3way("P", "H").label is NliLabel.NEUTRAL
    assert j.entail("Out", "a").entailed and not j.entail("Out", "b").entailed
    assert j.entail("Q", "H").entailed


def test_recorded_judge_rejects_conflicts_and_bad_lines(tmp_path):
    j = RecordedJudge()
    j.add_verdict("p", "h", "entailed")
    with pytest.raises(DataError):
        j.add_verdict("p", "h", "not_entailed")
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"premise": "p", "hypothesis": "h", "label": "perhaps"}) + "\n")
    with pytest.raises(DataError, match=":1"):
        RecordedJudge.load(bad)


def _llm(tmp_path, transport, api_key, style=PromptStyle.JSON_COT, strict=False, mode=CacheMode.READ_WRITE):
    gw = Gateway(cache_dir=tmp_path / "cache", api_key_env=api_key, transport=transport, sleep=lambda s: None)
    return LLMJudge(gw, PromptConfig(style=style), mode, strict=strict), gw


@pytest.mark.parametrize("style", list(PromptStyle))
def test_llm_judge_all_styles(tmp_path, api_key, fake_endpoint, style):
    j, _ = _llm(tmp_path, fake_endpoint.transport(), api_key, style)
    assert j.entail("Lungs are clear bilaterally.", "Lungs clear.").entailed
    assert not j.entail("Lungs are clear.", "Heart murmur.").entailed
    assert j.entail_3way("Lungs clear.", "Heart murmur.").label is NliLabel.NEUTRAL
    assert j.id == f"llm:gpt-4:{style.value}:0shot"


def test_llm_judge_claims_and_support(tmp_path, api_key, fake_endpoint):
    j, gw = _llm(tmp_path, fake_endpoint.transport(), api_key)
    claims = extract_claims(j, "Lungs clear. Soft murmur.")
    assert [c.text for c in claims] == ["Lungs clear.", "Soft murmur."] and not claims.fallback
    res = select_supporting_citations(j, parse_citations("Lungs clear, soft murmur. [0][1][2]"), UNITS)
    assert res.entailed and res.supporting == {0, 1}
    assert "claim_extraction:builtin:claims" in j.exemplar_ids
    # claim extraction prompt carries one exemplar by default
    claim_req = next(r for r in fake_endpoint.requests if "You are given a passage" in r["messages"][0]["content"])
    assert len(claim_req["messages"]) == 4


def _garbage(request):
    return httpx.Response(200, json={"choices": [{"message": {"content": "I am not sure about this one."}}]})


def test_lenient_parse_failures(tmp_path, api_key):
    j, _ = _llm(tmp_path, httpx.MockTransport(_garbage), api_key)
    v = j.entail("p", "h")
    assert v.parse_failed and v.label is Entailment.NOT_ENTAILED
    v3 = j.entail_3way("p", "h")
    assert v3.parse_failed and v3.label is NliLabel.NEUTRAL
    claims = extract_claims(j, "Lungs clear. Murmur.")
    assert claims.fallback and len(claims) == 2
    res = select_supporting_citations(j, parse_citations("X. [0]"), UNITS)
    assert res.parse_failed and not res.entailed


def test_strict_parse_failure_raises(tmp_path, api_key):
    j, _ = _llm(tmp_path, httpx.MockTransport(_garbage), api_key, strict=True)
    with pytest.raises(JudgmentError):
        j.entail("p", "h")


def test_gateway_errors_propagate_even_when_lenient(tmp_path, api_key):
    j, _ = _llm(tmp_path, httpx.MockTransport(lambda r: httpx.Response(400)), api_key)
    with pytest.raises(GatewayError):
        j.entail("p", "h")
    replay, _ = _llm(tmp_path / "empty", None, api_key, mode=CacheMode.REPLAY_ONLY)
    with pytest.raises(ReplayMiss):
        replay.entail("p", "h")


def test_task_config_override(tmp_path, api_key, fake_endpoint):
    gw = Gateway(cache_dir=tmp_path / "c", api_key_env=api_key, transport=fake_endpoint.transport())
    base = PromptConfig(style=PromptStyle.JSON)
    j = LLMJudge(gw, base, task_configs={Task.CLAIM_EXTRACTION: base.with_task(Task.CLAIM_EXTRACTION)})
    extract_claims(j, "Lungs clear.")
    assert len(fake_endpoint.requests[-1]["messages"]) == 2
