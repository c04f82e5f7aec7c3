from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from claimeval.prompts import (
    ANLI_EXEMPLAR,
    CLAIM_EXEMPLAR,
    Message,
    MessageSequence,
    PromptConfig,
    PromptError,
    PromptStyle,
    Task,
    render_prompt,
    system_instruction,
)

GOLDEN_DIR = Path(__file__).parent / "golden" / "prompts"
EXEMPLARS = [
    ({"premise": "The clinic opens at nine and closes at five.", "hypothesis": "The clinic opens at nine."},
     {"explanation": "The premise states the opening time directly.", "entailment_prediction": 1}),
    ({"premise": "She takes aspirin every morning.", "hypothesis": "She takes aspirin at night."},
     {"explanation": "The premise only mentions mornings.", "entailment_prediction": 0}),
    ({"premise": "The x-ray showed no fracture.", "hypothesis": "The x-ray was normal for bone injury."},
     {"explanation": "No fracture means no bone injury was seen.", "entailment_prediction": 1}),
]
QUERY = {"premise": "Lungs are clear to auscultation bilaterally.",
         "hypothesis": "The patient's lungs are clear."}
CELLS = [(style, shots) for style in PromptStyle for shots in (0, 2, 3)]
HEAD = "You are given a pair of premise and hypothesis"


def _render(style: PromptStyle, shots: int) -> str:
    cfg = PromptConfig(style=style, shots=shots, exemplars=EXEMPLARS, exemplar_ids=["e1", "e2", "e3"])
    return render_prompt(cfg, QUERY).render_text()


@pytest.mark.parametrize("style,shots", CELLS, ids=[f"{s.value}-{k}shot" for s, k in CELLS])
def test_entailment_prompt_matches_golden(style, shots):
    text = _render(style, shots)
    path = GOLDEN_DIR / f"entailment_{style.value}_{shots}shot.txt"
    if os.environ.get("CLAIMEVAL_UPDATE_GOLDENS"):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")
    assert HEAD in text
    if style is not PromptStyle.NL:
        assert "entailment_prediction" in text


def test_message_structure():
    cfg = PromptConfig(style=PromptStyle.JSON, shots=2, exemplars=EXEMPLARS)
    msgs = render_prompt(cfg, QUERY)
    assert [m.role for m in msgs] == ["system", "user", "assistant", "user", "assistant", "user"]
    assert json.loads(msgs.messages[-1].content) == QUERY


def test_cot_puts_explanation_before_prediction():
    cfg = PromptConfig(style=PromptStyle.JSON_COT, shots=1, exemplars=EXEMPLARS)
    answer = render_prompt(cfg, QUERY).messages[2].content
    assert answer.index('"explanation"') < answer.index('"entailment_prediction"')
    sys_text = system_instruction(Task.ENTAILMENT_2WAY, PromptStyle.JSON_COT)
    assert sys_text.index("'explanation'") < sys_text.index("'entailment_prediction'")


def test_nl_style_has_no_json_contract():
    text = system_instruction(Task.ENTAILMENT_2WAY, PromptStyle.NL)
    assert "entailment_prediction" not in text and HEAD in text
    user = render_prompt(PromptConfig(style=PromptStyle.NL), QUERY).messages[-1].content
    assert user == f"Premise: {QUERY['premise']}\nHypothesis: {QUERY['hypothesis']}"


def test_three_way_instruction_lists_labels():
    text = system_instruction(Task.ENTAILMENT_3WAY, PromptStyle.JSON)
    for label in ("entailment", "neutral", "contradiction"):
        assert f"'{label}'" in text


def test_too_many_shots_rejected():
    with pytest.raises(PromptError):
        PromptConfig(shots=2, exemplars=EXEMPLARS[:1])


def test_sequence_validation():
    with pytest.raises(PromptError):
        MessageSequence((Message("user", "hi"),))
    with pytest.raises(PromptError):
        MessageSequence((Message("system", "s"), Message("assistant", "a")))
    with pytest.raises(PromptError):
        Message("tool", "x")


def test_rendering_is_pure():
    assert _render(PromptStyle.JSON_COT, 3) == _render(PromptStyle.JSON_COT, 3)


def test_builtin_exemplars_render():
    cfg = PromptConfig(style=PromptStyle.JSON_COT, shots=1, exemplars=[ANLI_EXEMPLAR])
    assert "F.T. Island" in render_prompt(cfg, QUERY).render_text()
    claims_cfg = PromptConfig(style=PromptStyle.JSON, shots=1, task=Task.CLAIM_EXTRACTION,
                              exemplars=[CLAIM_EXEMPLAR])
    msgs = render_prompt(claims_cfg, {"passage": "Lungs clear."})
    assert json.loads(msgs.messages[2].content)["claims"][0] == CLAIM_EXEMPLAR[1]["claims"][0]


def test_citation_and_generation_prompts():
    cfg = PromptConfig(style=PromptStyle.JSON, task=Task.CITATION_SUPPORT)
    msgs = render_prompt(cfg, {"sentence": "Murmur.", "cited": "[3] murmur heard"})
    assert msgs.messages[-1].content == "Sentence: Murmur.\nCited passages:\n[3] murmur heard"
    gen = render_prompt(PromptConfig(task=Task.GENERATION), {"input_units": ["a", "b"]})
    assert gen.messages[-1].content == "[0] a\n[1] b"
