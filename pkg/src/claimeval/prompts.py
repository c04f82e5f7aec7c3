"""Prompt templates and message rendering for every judge task.

Entailment prompts come in three response styles:

* ``nl``: free text, the model answers ``1`` or ``0`` (or a 3-way label);
* ``json``: a JSON dictionary echoing premise and hypothesis plus
  ``entailment_prediction``;
* ``json_cot``: as ``json`` but with an ``explanation`` field that must be
  generated before the prediction.

Few-shot exemplars become alternating user/assistant messages placed between
the system instruction and the query.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

from .segment import render_numbered_input


class PromptStyle(str, Enum):
    NL = "nl"
    JSON = "json"
    JSON_COT = "json_cot"


class Task(str, Enum):
    ENTAILMENT_2WAY = "entailment_2way"
    ENTAILMENT_3WAY = "entailment_3way"
    CLAIM_EXTRACTION = "claim_extraction"
    CITATION_SUPPORT = "citation_support"
    GENERATION = "generation"


class PromptError(ValueError):
    pass


Exemplar = tuple[Mapping[str, Any], Mapping[str, Any]]


@dataclass(frozen=True)
class PromptConfig:
    style: PromptStyle = PromptStyle.JSON_COT
    shots: int = 0
    task: Task = Task.ENTAILMENT_2WAY
    model_name: str = "gpt-4"
    temperature: float = 0.0
    exemplars: tuple[Exemplar, ...] = ()
    exemplar_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "style", PromptStyle(self.style))
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "exemplars", tuple(self.exemplars))
        object.__setattr__(self, "exemplar_ids", tuple(self.exemplar_ids))
        object.__setattr__(self, "temperature", float(self.temperature))
        if self.shots < 0:
            raise PromptError("shots must be >= 0")
        if self.shots > len(self.exemplars):
            raise PromptError(
                f"{self.shots}-shot prompt requested but only {len(self.exemplars)} exemplars available"
            )

    def with_task(self, task: Task | str, exemplars: Sequence[Exemplar] = (),
                  shots: int | None = None, exemplar_ids: Sequence[str] = ()) -> "PromptConfig":
        exemplars = tuple(exemplars)
        return PromptConfig(
            style=self.style,
            shots=min(self.shots, len(exemplars)) if shots is None else shots,
            task=Task(task),
            model_name=self.model_name,
            temperature=self.temperature,
            exemplars=exemplars,
            exemplar_ids=tuple(exemplar_ids),
        )


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise PromptError(f"bad role {self.role!r}")


@dataclass(frozen=True)
class MessageSequence:
    messages: tuple[Message, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs or msgs[0].role != "system" or any(m.role == "system" for m in msgs[1:]):
            raise PromptError("a message sequence starts with exactly one system message")
        body = [m.role for m in msgs[1:]]
        expected = ["user" if i % 2 == 0 else "assistant" for i in range(len(body))]
        if body != expected:
            raise PromptError("user and assistant messages must alternate, starting with user")

    def __iter__(self):
        return iter(self.messages)

    def __len__(self) -> int:
        return len(self.messages)

    def to_wire(self) -> list[dict[str, str]]:
        return [{"role": m.role, "content": m.content} for m in self.messages]

    def render_text(self) -> str:
        """Human-readable transcript, used for golden files."""
        return "\n\n".join(f"### {m.role}\n{m.content}" for m in self.messages) + "\n"


# --------------------------------------------------------------------------
# instructions

ENTAILMENT_HEAD = (
    "You are given a pair of premise and hypothesis. Please act as an impartial judge "
    "and evaluate whether the premise can fully entail the hypothesis."
)
_BINARY_LABELS = (
    "Your prediction should be '1' or '0', where '1' means the hypothesis can be fully "
    "entailed by the premise, '0' means the hypothesis cannot be entailed by the premise."
)
_TERNARY_LABELS = (
    "Your prediction should be 'entailment', 'neutral' or 'contradiction', where "
    "'entailment' means the hypothesis can be fully entailed by the premise, 'neutral' "
    "means the premise neither entails nor contradicts the hypothesis, and "
    "'contradiction' means the premise contradicts the hypothesis."
)


def _entailment_instruction(style: PromptStyle, three_way: bool) -> str:
    labels = _TERNARY_LABELS if three_way else _BINARY_LABELS
    values = "'entailment', 'neutral' or 'contradiction'" if three_way else "'1' or '0'"
    parts = [ENTAILMENT_HEAD]
    if style is PromptStyle.JSON_COT:
        parts.append("Also generate an explanation for your prediction.")
    parts.append(labels)
    if style is PromptStyle.NL:
        parts.append(f"Answer with {values} only.")
    else:
        fields = "'premise': the premise, 'hypothesis': the hypothesis, "
        if style is PromptStyle.JSON_COT:
            fields += "'explanation': the reason why the entailment prediction is made, "
        fields += (
            "'entailment_prediction': your prediction on the entailment relation between "
            f"the premise and hypothesis, which can be {values}."
        )
        parts.append(f"Generate the answer as a json dict in the format of {{{fields}}}.")
    return " ".join(parts)


def _claim_instruction(style: PromptStyle) -> str:
    explanation = ""
    if style is PromptStyle.JSON_COT:
        explanation = "'explanation': how the passage was decomposed, "
    return (
        "You are given a passage. Break the passage down into a list of claims. Each claim "
        "must be a short, self-contained declarative sentence that states one fact from the "
        "passage, with pronouns replaced by the entities they refer to. Cover every fact in "
        "the passage and do not add anything the passage does not say. Generate the answer "
        "as a json dict in the format of {'passage': the passage, "
        f"{explanation}'claims': a list of claim strings}}."
    )


def _citation_instruction(style: PromptStyle) -> str:
    explanation = ""
    if style is PromptStyle.JSON_COT:
        explanation = "'explanation': the reason for your judgment, "
    return (
        "You are given a sentence and the numbered input passages it cites. Please act as "
        "an impartial judge and evaluate whether the cited passages, taken together, can "
        "fully entail the sentence. If they can, also list the numbers of all cited passages "
        "that support the sentence; leave out cited passages that are irrelevant to it. "
        "Generate the answer as a json dict in the format of {'sentence': the sentence, "
        f"{explanation}'entailed': '1' if the cited passages fully entail the sentence, "
        "otherwise '0', 'supporting': a list of the supporting citation numbers}."
    )


GENERATION_INSTRUCTION = (
    "You are given a numbered input. Write the requested output text based only on the "
    "input. After every sentence, cite the numbers of the input lines that support it in "
    "square brackets, for example [0][3]. Every sentence must cite at least one input line."
)


def _dump(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=4)


def _pick(payload: Mapping[str, Any], *keys: str) -> dict[str, Any]:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise PromptError(f"payload is missing field(s): {', '.join(missing)}")
    return {k: payload[k] for k in keys}


# --------------------------------------------------------------------------
# per-task user/assistant rendering


def _entailment_user(style: PromptStyle, payload: Mapping[str, Any]) -> str:
    p = _pick(payload, "premise", "hypothesis")
    if style is PromptStyle.NL:
        return f"Premise: {p['premise']}\nHypothesis: {p['hypothesis']}"
    return _dump(p)


def _entailment_assistant(style: PromptStyle, inp: Mapping[str, Any],
                          out: Mapping[str, Any]) -> str:
    prediction = _pick(out, "entailment_prediction")["entailment_prediction"]
    if style is PromptStyle.NL:
        return str(prediction)
    obj = _pick(inp, "premise", "hypothesis")
    if style is PromptStyle.JSON_COT:
        obj["explanation"] = out.get("explanation", "")
    obj["entailment_prediction"] = prediction
    return _dump(obj)


def _claims_user(style: PromptStyle, payload: Mapping[str, Any]) -> str:
    return _dump(_pick(payload, "passage"))


def _claims_assistant(style: PromptStyle, inp: Mapping[str, Any], out: Mapping[str, Any]) -> str:
    obj = _pick(inp, "passage")
    if style is PromptStyle.JSON_COT:
        obj["explanation"] = out.get("explanation", "")
    obj["claims"] = list(_pick(out, "claims")["claims"])
    return _dump(obj)


def _citation_user(style: PromptStyle, payload: Mapping[str, Any]) -> str:
    p = _pick(payload, "sentence", "cited")
    return f"Sentence: {p['sentence']}\nCited passages:\n{p['cited']}"


def _citation_assistant(style: PromptStyle, inp: Mapping[str, Any],
                        out: Mapping[str, Any]) -> str:
    obj = {"sentence": _pick(inp, "sentence")["sentence"]}
    if style is PromptStyle.JSON_COT:
        obj["explanation"] = out.get("explanation", "")
    o = _pick(out, "entailed", "supporting")
    obj["entailed"] = o["entailed"]
    obj["supporting"] = list(o["supporting"])
    return _dump(obj)


def _generation_user(style: PromptStyle, payload: Mapping[str, Any]) -> str:
    units = _pick(payload, "input_units")["input_units"]
    text = render_numbered_input(list(units))
    task = payload.get("instruction")
    return f"{task}\n\n{text}" if task else text


def _generation_assistant(style: PromptStyle, inp: Mapping[str, Any],
                          out: Mapping[str, Any]) -> str:
    return str(_pick(out, "output")["output"])


_RENDERERS = {
    Task.ENTAILMENT_2WAY: (_entailment_user, _entailment_assistant),
    Task.ENTAILMENT_3WAY: (_entailment_user, _entailment_assistant),
    Task.CLAIM_EXTRACTION: (_claims_user, _claims_assistant),
    Task.CITATION_SUPPORT: (_citation_user, _citation_assistant),
    Task.GENERATION: (_generation_user, _generation_assistant),
}


def system_instruction(task: Task, style: PromptStyle) -> str:
    if task is Task.ENTAILMENT_2WAY:
        return _entailment_instruction(style, three_way=False)
    if task is Task.ENTAILMENT_3WAY:
        return _entailment_instruction(style, three_way=True)
    if task is Task.CLAIM_EXTRACTION:
        return _claim_instruction(style)
    if task is Task.CITATION_SUPPORT:
        return _citation_instruction(style)
    return GENERATION_INSTRUCTION


def render_prompt(config: PromptConfig, payload: Mapping[str, Any]) -> MessageSequence:
    """Build the message sequence for one query; a pure function of its inputs."""
    if config.shots > len(config.exemplars):
        raise PromptError("more shots than exemplars")
    user, assistant = _RENDERERS[config.task]
    messages = [Message("system", system_instruction(config.task, config.style))]
    for inp, out in config.exemplars[: config.shots]:
        messages.append(Message("user", user(config.style, inp)))
        messages.append(Message("assistant", assistant(config.style, inp, out)))
    messages.append(Message("user", user(config.style, payload)))
    return MessageSequence(tuple(messages))


# --------------------------------------------------------------------------
# built-in exemplars

ANLI_EXEMPLAR: Exemplar = (
    {
        "premise": (
            "Lee Hong-gi is a South Korean singer-songwriter, actor, writer, and fashion "
            "designer. He is best known for his singing abilities and being the main singer "
            "of the South Korean rock band F.T. Island. Lee released his first solo extended "
            "play 'FM302' in South Korea on 18 November 2015 and his Japanese album 'AM302' "
            "on 9 December 2015."
        ),
        "hypothesis": "The South Korean rock band F.T. Island is best known for it's lead singer, Lee Hong-gi.",
    },
    {
        "explanation": (
            "Lee Hong-gi is best known for his talents, according to the context. However, "
            "it is not mentioned that his band is most known for him."
        ),
        "entailment_prediction": 0,
    },
)

CLAIM_EXEMPLAR_PASSAGE = (
    "PHYSICAL EXAMINATION\n"
    "• Constitutional: In no apparent distress.\n"
    "• Neck: No carotid bruits.\n"
    "• Respiratory: Lungs are clear to auscultation bilaterally. No wheezes, rales, or rhonchi.\n"
    "• Cardiovascular: Grade 2/6 systolic ejection murmur.\n"
    "• Musculoskeletal: 1+ edema in the bilateral lower extremities."
)
CLAIM_EXEMPLAR_CLAIMS = (
    "The patient appears to be in no apparent distress.",
    "No carotid bruits are present in the patient's neck.",
    "The patient's lungs are clear upon auscultation, with no wheezes, rales, or rhonchi.",
    "The patient has a grade 2/6 systolic ejection murmur.",
    "There is 1+ edema in both lower extremities of the patient.",
)
CLAIM_EXEMPLAR: Exemplar = (
    {"passage": CLAIM_EXEMPLAR_PASSAGE},
    {"claims": list(CLAIM_EXEMPLAR_CLAIMS)},
)
