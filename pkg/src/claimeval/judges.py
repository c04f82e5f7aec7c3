"""Entailment judges.

Three interchangeable backends share one interface:

``LLMJudge``
    prompts a chat model through :class:`~claimeval.gateway.Gateway`.
``LexicalOracleJudge``
    deterministic token-containment rule; no model, no network.
``RecordedJudge``
    replays a stored verdict table (worked scenarios, external NLI verdicts).

The module-level functions (``judge_entailment`` and friends) check
preconditions and then dispatch to the judge.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .gateway import CacheMode, Gateway
from .model import (
    Claim,
    ClaimSource,
    DataError,
    Entailment,
    NliLabel,
    Verdict,
    atomic_write_text,
    collapse,
    dumps_line,
    make_claims,
    read_jsonl,
)
from .parsing import (
    ParseFailure,
    normalize_prediction,
    parse_nl_binary,
    parse_nl_ternary,
    parse_structured,
)
from .prompts import CLAIM_EXEMPLAR, PromptConfig, PromptStyle, Task, render_prompt
from .segment import CitedSentence, render_numbered_input, segment_text, strip_citations

logger = logging.getLogger(__name__)


class JudgmentError(RuntimeError):
    """A judge could not produce a verdict (strict-mode parse failure, missing record)."""


class RecordMiss(JudgmentError):
    pass


def text_hash(text: str) -> str:
    """SHA-256 of ``text`` with whitespace runs collapsed."""
    return hashlib.sha256(" ".join(text.split()).encode("utf-8")).hexdigest()


def _request_hash(task: str, **fields: str) -> str:
    body = {"task": task, **{k: " ".join(v.split()) for k, v in fields.items()}}
    blob = json.dumps(body, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CitationSupportResult:
    entailed: bool
    supporting: frozenset[int] = frozenset()
    parse_failed: bool = False
    request_hash: str = ""
    hallucinated: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExtractedClaims:
    claims: tuple[Claim, ...]
    fallback: bool = False

    def __iter__(self):
        return iter(self.claims)

    def __len__(self) -> int:
        return len(self.claims)

    def __getitem__(self, i):
        return self.claims[i]


def cited_premise(sentence: CitedSentence, input_units: Sequence[str]) -> str:
    """Concatenate the cited units, keeping their original numbers."""
    cites = list(sentence.citations)
    return render_numbered_input([input_units[c] for c in cites], cites)


def sentence_claims(passage: str, source: ClaimSource | str) -> list[Claim]:
    """Non-heading sentences of ``passage`` (markers stripped) as claims.

    A passage made only of headings yields the whole stripped passage as one claim.
    """
    texts = [strip_citations(s.text) for s in segment_text(passage) if not s.is_heading]
    claims = make_claims(texts, source)
    if not claims:
        claims = make_claims([strip_citations(passage)], source)
    return claims


class Judge:
    """Interface shared by every judge backend."""

    id: str = "judge"
    exemplar_ids: tuple[str, ...] = ()

    def entail(self, premise: str, hypothesis: str) -> Verdict:
        raise NotImplementedError

    def entail_3way(self, premise: str, hypothesis: str) -> Verdict:
        raise NotImplementedError

    def extract_claims(self, passage: str, source: ClaimSource) -> ExtractedClaims:
        raise NotImplementedError

    def select_supporting(self, sentence: CitedSentence,
                          input_units: Sequence[str]) -> CitationSupportResult:
        raise NotImplementedError

    def map(self, fn: Callable, items: Iterable) -> list:
        """Apply ``fn`` over ``items`` (possibly concurrently); results keep input order."""
        return [fn(x) for x in items]


# --------------------------------------------------------------------------
# lexical oracle

STOPWORDS = frozenset(
    """a an the and or but nor of to in on at by for with from into onto over under as is
    are was were be been being am do does did has have had having it its this that these
    those there here he she they them his her their we you i me my our your not no so
    if then than too very can will would should could may might must shall also""".split()
)
_NONALNUM = re.compile(r"[^0-9a-z]+")


def content_tokens(text: str) -> frozenset[str]:
    """Lowercased alphanumeric tokens minus stopwords."""
    return frozenset(t for t in _NONALNUM.split(text.lower()) if t and t not in STOPWORDS)


class LexicalOracleJudge(Judge):
    """Entailed iff every content token of the hypothesis occurs in the premise.

    3-way judgments map non-entailment to ``neutral``: the rule cannot tell
    neutral from contradiction. Citation support marks a cited unit as
    supporting when it shares a content token with the sentence.
    """

    id = "lexical_oracle"

    def entail(self, premise: str, hypothesis: str) -> Verdict:
        ok = content_tokens(hypothesis) <= content_tokens(premise)
        return Verdict(
            Entailment.ENTAILED if ok else Entailment.NOT_ENTAILED,
            self.id,
            _request_hash("entailment", premise=premise, hypothesis=hypothesis),
        )

    def entail_3way(self, premise: str, hypothesis: str) -> Verdict:
        v = self.entail(premise, hypothesis)
        label = NliLabel.ENTAILMENT if v.entailed else NliLabel.NEUTRAL
        return Verdict(label, self.id, v.request_hash)

    def extract_claims(self, passage: str, source: ClaimSource) -> ExtractedClaims:
        return ExtractedClaims(tuple(sentence_claims(passage, source)))

    def select_supporting(self, sentence, input_units):
        hyp = content_tokens(sentence.clean_text)
        unit_tokens = {c: content_tokens(input_units[c]) for c in sentence.citations}
        pooled = frozenset().union(*unit_tokens.values())
        entailed = hyp <= pooled
        supporting = frozenset(c for c, toks in unit_tokens.items() if toks & hyp) if entailed else frozenset()
        return CitationSupportResult(
            entailed=entailed,
            supporting=supporting,
            request_hash=_request_hash(
                "citation_support",
                premise=cited_premise(sentence, input_units),
                hypothesis=sentence.clean_text,
            ),
        )


# --------------------------------------------------------------------------
# recorded verdicts


_ALL_LABELS = {l.value for l in Entailment} | {l.value for l in NliLabel}


def _check_label(label: str) -> str:
    if label not in _ALL_LABELS:
        raise DataError(f"unknown verdict label {label!r}")
    return label


class RecordedJudge(Judge):
    """Replays stored judgments keyed by (premise hash, hypothesis hash).

    A stored binary label answers 3-way queries as ``entailment`` or
    ``neutral``; a stored 3-way label answers binary queries through the
    neutral/contradiction merge.
    """

    def __init__(self, judge_id: str = "recorded"):
        self.id = judge_id
        self._entail: dict[tuple[str, str], str] = {}
        self._claims: dict[str, tuple[str, ...]] = {}
        self._support: dict[tuple[str, str], tuple[bool, tuple[int, ...]]] = {}

    # -- building ---------------------------------------------------------

    def add_verdict(self, premise: str, hypothesis: str, label: str | Entailment | NliLabel) -> None:
        self.add_verdict_hashed(text_hash(premise), text_hash(hypothesis), label)

    def add_verdict_hashed(self, premise_hash: str, hypothesis_hash: str, label) -> None:
        label = _check_label(getattr(label, "value", label))
        key = (premise_hash, hypothesis_hash)
        old = self._entail.get(key)
        if old is not None and old != label:
            raise DataError(f"conflicting verdicts for {key}: {old} vs {label}")
        self._entail[key] = label

    def add_claim_table(self, premise: str, claims: Sequence[str],
                        labels: Mapping[int, str | Entailment | NliLabel]) -> None:
        """Record verdicts given per claim ordinal for one premise."""
        for ordinal, label in labels.items():
            ordinal = int(ordinal)
            if not 0 <= ordinal < len(claims):
                raise DataError(f"claim ordinal {ordinal} out of range")
            self.add_verdict(premise, claims[ordinal], label)

    def add_claims(self, passage: str, claims: Sequence[str]) -> None:
        self._claims[text_hash(passage)] = tuple(claims)

    def add_support(self, premise: str, sentence: str, entailed: bool,
                    supporting: Iterable[int]) -> None:
        self._support[(text_hash(premise), text_hash(sentence))] = (
            bool(entailed), tuple(sorted(set(int(s) for s in supporting))))

    def add_support_for(self, sentence: CitedSentence, input_units: Sequence[str],
                        entailed: bool, supporting: Iterable[int]) -> None:
        self.add_support(cited_premise(sentence, input_units), sentence.clean_text, entailed, supporting)

    # -- judging ----------------------------------------------------------

    def _lookup(self, premise: str, hypothesis: str) -> tuple[str, str]:
        key = (text_hash(premise), text_hash(hypothesis))
        try:
            return self._entail[key], _request_hash("entailment", premise=premise, hypothesis=hypothesis)
        except KeyError:
            raise RecordMiss(
                f"{self.id}: no recorded verdict for premise {key[0][:12]}… / hypothesis {key[1][:12]}…"
            ) from None

    def entail(self, premise, hypothesis):
        label, rh = self._lookup(premise, hypothesis)
        return Verdict(collapse(label), self.id, rh)

    def entail_3way(self, premise, hypothesis):
        label, rh = self._lookup(premise, hypothesis)
        if label in (Entailment.ENTAILED.value, Entailment.NOT_ENTAILED.value):
            label = NliLabel.ENTAILMENT if label == Entailment.ENTAILED.value else NliLabel.NEUTRAL
        return Verdict(NliLabel(label), self.id, rh)

    def extract_claims(self, passage, source):
        try:
            texts = self._claims[text_hash(passage)]
        except KeyError:
            raise RecordMiss(f"{self.id}: no recorded claims for passage") from None
        return ExtractedClaims(tuple(make_claims(texts, source)))

    def select_supporting(self, sentence, input_units):
        premise = cited_premise(sentence, input_units)
        try:
            entailed, supporting = self._support[(text_hash(premise), text_hash(sentence.clean_text))]
        except KeyError:
            raise RecordMiss(f"{self.id}: no recorded citation support for {sentence.clean_text!r}") from None
        return CitationSupportResult(
            entailed, frozenset(supporting),
            request_hash=_request_hash("citation_support", premise=premise, hypothesis=sentence.clean_text),
        )

    # -- files ------------------------------------------------------------

    def records(self) -> list[dict]:
        rows = [
            {"premise_hash": p, "hypothesis_hash": h, "label": lab}
            for (p, h), lab in sorted(self._entail.items())
        ]
        rows += [
            {"kind": "claims", "passage_hash": p, "claims": list(c)}
            for p, c in sorted(self._claims.items())
        ]
        rows += [
            {"kind": "citation_support", "premise_hash": p, "hypothesis_hash": h,
             "entailed": int(e), "supporting": list(s)}
            for (p, h), (e, s) in sorted(self._support.items())
        ]
        return rows

    def save(self, path) -> None:
        atomic_write_text(path, "".join(dumps_line(r) + "\n" for r in self.records()))

    @classmethod
    def load(cls, *paths, judge_id: str | None = None) -> "RecordedJudge":
        """Load one or more verdict-table files.

        Entailment lines are ``{premise_hash, hypothesis_hash, label}``; raw
        ``premise``/``hypothesis`` text may stand in for either hash. Other
        line kinds: ``claims``, ``citation_support`` and ``claim_table``
        (``{premise, claims, labels: {ordinal: label}}``).
        """
        judge = cls(judge_id or "recorded:" + "+".join(Path(p).stem for p in paths))
        for path in paths:
            for lineno, obj in read_jsonl(path):
                try:
                    judge._ingest(obj)
                except (KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"{path}:{lineno}: bad verdict record ({exc})") from None
        return judge

    def _ingest(self, obj: dict) -> None:
        kind = obj.get("kind", "entailment")

        def h(name: str) -> str:
            return obj[f"{name}_hash"] if f"{name}_hash" in obj else text_hash(obj[name])

        if kind == "entailment":
            self.add_verdict_hashed(h("premise"), h("hypothesis"), obj["label"])
        elif kind == "claims":
            self._claims[h("passage")] = tuple(obj["claims"])
        elif kind == "citation_support":
            self._support[(h("premise"), h("hypothesis"))] = (
                bool(normalize_prediction(obj["entailed"])),
                tuple(sorted(set(int(s) for s in obj["supporting"]))),
            )
        elif kind == "claim_table":
            self.add_claim_table(obj["premise"], obj["claims"],
                                 {int(k): v for k, v in obj["labels"].items()})
        else:
            raise ValueError(f"unknown record kind {kind!r}")


# --------------------------------------------------------------------------
# LLM-backed judge


_TERNARY = {l.value for l in NliLabel}


class LLMJudge(Judge):
    """Judge that prompts a chat model.

    ``config`` fixes model, style and temperature and serves as the binary
    entailment prompt. ``task_configs`` overrides the prompt per task; by
    default claim extraction uses one built-in exemplar and the other tasks
    are zero-shot.

    In lenient mode (``strict=False``) an unparseable answer becomes
    ``not_entailed`` with ``parse_failed`` set, and failed claim extraction
    falls back to sentence splitting. Gateway errors always propagate.
    """

    def __init__(self, gateway: Gateway, config: PromptConfig,
                 cache_mode: CacheMode | str = CacheMode.READ_WRITE, strict: bool = False,
                 task_configs: Mapping[Task | str, PromptConfig] | None = None,
                 judge_id: str | None = None):
        self.gateway = gateway
        self.cache_mode = CacheMode(cache_mode)
        self.strict = strict
        base = config
        configs = {
            Task.ENTAILMENT_2WAY: base if base.task is Task.ENTAILMENT_2WAY
            else base.with_task(Task.ENTAILMENT_2WAY),
            Task.ENTAILMENT_3WAY: base if base.task is Task.ENTAILMENT_3WAY
            else base.with_task(Task.ENTAILMENT_3WAY),
            Task.CLAIM_EXTRACTION: base.with_task(Task.CLAIM_EXTRACTION, [CLAIM_EXEMPLAR], 1, ["builtin:claims"]),
            Task.CITATION_SUPPORT: base.with_task(Task.CITATION_SUPPORT),
        }
        for task, cfg in (task_configs or {}).items():
            configs[Task(task)] = cfg
        self.configs = configs
        self.id = judge_id or f"llm:{base.model_name}:{base.style.value}:{base.shots}shot"

    @property
    def exemplar_ids(self) -> tuple[str, ...]:
        ids = []
        for task, cfg in self.configs.items():
            ids += [f"{task.value}:{i}" for i in cfg.exemplar_ids[: cfg.shots]]
        return tuple(ids)

    def _ask(self, task: Task, payload: Mapping) -> tuple[str, str, PromptConfig]:
        cfg = self.configs[task]
        messages = render_prompt(cfg, payload)
        text = self.gateway.complete(messages, cfg, self.cache_mode)
        return text, self.gateway.digest(messages, cfg), cfg

    def _soft_fail(self, what: str, exc: ParseFailure) -> None:
        if self.strict:
            raise JudgmentError(f"{self.id}: could not parse {what} response: {exc}") from exc
        logger.warning("%s: unparseable %s response (%s); using fallback", self.id, what, exc)

    def entail(self, premise, hypothesis):
        text, digest, cfg = self._ask(Task.ENTAILMENT_2WAY, {"premise": premise, "hypothesis": hypothesis})
        try:
            if cfg.style is PromptStyle.NL:
                pred, expl = parse_nl_binary(text), None
            else:
                obj = parse_structured(text, ["entailment_prediction"], {0, 1})
                pred, expl = obj["entailment_prediction"], obj.get("explanation")
        except ParseFailure as exc:
            self._soft_fail("entailment", exc)
            return Verdict(Entailment.NOT_ENTAILED, self.id, digest, parse_failed=True)
        label = Entailment.ENTAILED if pred == 1 else Entailment.NOT_ENTAILED
        return Verdict(label, self.id, digest, None if expl is None else str(expl))

    def entail_3way(self, premise, hypothesis):
        text, digest, cfg = self._ask(Task.ENTAILMENT_3WAY, {"premise": premise, "hypothesis": hypothesis})
        try:
            if cfg.style is PromptStyle.NL:
                pred, expl = parse_nl_ternary(text), None
            else:
                obj = parse_structured(text, ["entailment_prediction"], _TERNARY)
                pred, expl = obj["entailment_prediction"], obj.get("explanation")
        except ParseFailure as exc:
            self._soft_fail("3-way entailment", exc)
            return Verdict(NliLabel.NEUTRAL, self.id, digest, parse_failed=True)
        return Verdict(NliLabel(pred), self.id, digest, None if expl is None else str(expl))

    def extract_claims(self, passage, source):
        text, _, _ = self._ask(Task.CLAIM_EXTRACTION, {"passage": passage})
        try:
            obj = parse_structured(text, ["claims"])
            raw = obj["claims"]
            if not isinstance(raw, list) or not all(isinstance(c, str) for c in raw):
                raise ParseFailure("'claims' is not a list of strings", text)
            claims = make_claims(raw, source)
            if not claims:
                raise ParseFailure("empty claim list", text)
        except ParseFailure as exc:
            self._soft_fail("claim extraction", exc)
            return ExtractedClaims(tuple(sentence_claims(passage, source)), fallback=True)
        return ExtractedClaims(tuple(claims))

    def select_supporting(self, sentence, input_units):
        payload = {"sentence": sentence.clean_text, "cited": cited_premise(sentence, input_units)}
        text, digest, _ = self._ask(Task.CITATION_SUPPORT, payload)
        try:
            obj = parse_structured(text, ["entailed", "supporting"])
            entailed = normalize_prediction(obj["entailed"])
            if entailed not in (0, 1):
                raise ParseFailure(f"'entailed' must be 0 or 1, got {obj['entailed']!r}", text)
            raw = obj["supporting"]
            if not isinstance(raw, list):
                raise ParseFailure("'supporting' is not a list", text)
            supporting = set()
            for s in raw:
                s = normalize_prediction(s)
                if isinstance(s, str):
                    s = normalize_prediction(s.strip("[]"))
                if not isinstance(s, int):
                    raise ParseFailure(f"non-integer citation {s!r}", text)
                supporting.add(s)
        except ParseFailure as exc:
            self._soft_fail("citation support", exc)
            return CitationSupportResult(False, frozenset(), parse_failed=True, request_hash=digest)
        return CitationSupportResult(bool(entailed), frozenset(supporting), request_hash=digest)

    def map(self, fn, items):
        return self.gateway.map(fn, items)


# --------------------------------------------------------------------------
# public operations


def _require_text(name: str, value: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"{name} must be a non-empty string")


def judge_entailment(judge: Judge, premise: str, hypothesis: str) -> Verdict:
    _require_text("premise", premise)
    _require_text("hypothesis", hypothesis)
    return judge.entail(premise, hypothesis)


def judge_entailment_3way(judge: Judge, premise: str, hypothesis: str) -> Verdict:
    _require_text("premise", premise)
    _require_text("hypothesis", hypothesis)
    return judge.entail_3way(premise, hypothesis)


def extract_claims(judge: Judge, passage: str,
                   source: ClaimSource | str = ClaimSource.REFERENCE) -> ExtractedClaims:
    _require_text("passage", passage)
    result = judge.extract_claims(passage, ClaimSource(source))
    if not len(result):
        raise JudgmentError(f"{judge.id}: extracted no claims")
    return result


def select_supporting_citations(judge: Judge, sentence: CitedSentence,
                                input_units: Sequence[str]) -> CitationSupportResult:
    """One judge call deciding entailment by all cited units and which of them support.

    Indices the judge returns outside the sentence's citation set are dropped
    with a warning, so ``supporting`` is always a subset of the citations.
    """
    if not sentence.citations:
        raise ValueError("sentence has no citations")
    bad = [c for c in sentence.citations if not 0 <= c < len(input_units)]
    if bad:
        raise ValueError(f"citation(s) {bad} out of range for {len(input_units)} input units")
    result = judge.select_supporting(sentence, input_units)
    cited = frozenset(sentence.citations)
    extra = tuple(sorted(result.supporting - cited))
    if extra:
        logger.warning("%s returned uncited supporting indices %s; dropped", judge.id, list(extra))
        result = CitationSupportResult(result.entailed, result.supporting & cited,
                                       result.parse_failed, result.request_hash, extra)
    return result
