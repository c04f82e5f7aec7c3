"""Seeded small instances with known structure, for brute-force equivalence tests."""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..judges import RecordedJudge, content_tokens
from ..model import Claim, ClaimSource, Entailment, EvaluationInstance, make_claims
from ..segment import CitedSentence

VOCAB = (
    "aspirin ankle biopsy cardiac chest cough edema fever glucose heart insulin kidney lung "
    "murmur nausea pain pulse rash renal sinus spine stable swelling tender thyroid ulcer "
    "urine valve wheeze xray"
).split()

MAX_CLAIMS = 8
MAX_SENTENCES = 8
MAX_CITATIONS = 4


@dataclass(frozen=True)
class RandomBounds:
    max_claims: int = MAX_CLAIMS
    max_sentences: int = MAX_SENTENCES
    max_citations: int = MAX_CITATIONS

    def __post_init__(self) -> None:
        for name, cap in (("max_claims", MAX_CLAIMS), ("max_sentences", MAX_SENTENCES),
                          ("max_citations", MAX_CITATIONS)):
            value = getattr(self, name)
            if not 1 <= value <= cap:
                raise ValueError(f"{name} must lie in [1, {cap}], got {value}")


@dataclass(frozen=True)
class SyntheticSentence:
    words: tuple[str, ...]
    citations: tuple[int, ...]
    text: str


@dataclass(frozen=True)
class SyntheticTruth:
    """Word-level structure behind the rendered text."""

    unit_words: tuple[tuple[str, ...], ...]
    sentences: tuple[SyntheticSentence, ...]
    reference_claim_words: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class RandomScenario:
    instance: EvaluationInstance
    claims: tuple[Claim, ...]
    verdict_table: RecordedJudge
    truth: SyntheticTruth

    def __iter__(self):
        return iter((self.instance, self.claims, self.verdict_table))

    @property
    def reference_claims(self) -> list[Claim]:
        return [c for c in self.claims if c.source is ClaimSource.REFERENCE]

    @property
    def output_claims(self) -> list[Claim]:
        return [c for c in self.claims if c.source is ClaimSource.OUTPUT]


def _phrase(words) -> str:
    text = " ".join(words)
    return text[0].upper() + text[1:]


def _label(premise: str, hypothesis: str) -> Entailment:
    ok = content_tokens(hypothesis) <= content_tokens(premise)
    return Entailment.ENTAILED if ok else Entailment.NOT_ENTAILED


def random_instance(seed: int | str, bounds: RandomBounds = RandomBounds()) -> RandomScenario:
    """Build one instance from ``seed``; identical seeds give identical scenarios.

    Citations are drawn from ``0..n_units`` inclusive, so an out-of-range
    number appears now and then. Sentences may also carry no citation at all
    or a word that none of their cited units contain.
    """
    rng = random.Random(f"claimeval-synthetic:{seed}")
    n_units = rng.randint(1, 6)
    unit_words = tuple(tuple(rng.sample(VOCAB, rng.randint(1, 4))) for _ in range(n_units))
    units = tuple(_phrase(w) + "." for w in unit_words)

    sentences = []
    for _ in range(rng.randint(1, bounds.max_sentences)):
        k = min(rng.randint(0, bounds.max_citations), n_units + 1)
        cites = tuple(rng.sample(range(n_units + 1), k))
        pool = sorted({w for c in cites if c < n_units for w in unit_words[c]})
        words = rng.sample(pool, rng.randint(1, min(3, len(pool)))) if pool else [rng.choice(VOCAB)]
        if rng.random() < 0.3:
            words.append(rng.choice(VOCAB))
        words = tuple(dict.fromkeys(words))
        markers = "".join(f"[{c}]" for c in cites)
        if markers and rng.random() < 0.5:
            text = f"{_phrase(words)} {markers}."
        else:
            text = f"{_phrase(words)}.{' ' + markers if markers else ''}"
        sentences.append(SyntheticSentence(words, cites, text))
    sep = "\n" if rng.random() < 0.3 else " "
    output_text = sep.join(s.text for s in sentences)

    out_words = sorted({w for s in sentences for w in s.words})
    ref_words = []
    for _ in range(rng.randint(1, bounds.max_claims)):
        source = out_words if rng.random() < 0.6 else VOCAB
        ref_words.append(tuple(dict.fromkeys(rng.sample(source, rng.randint(1, min(3, len(source)))))))
    ref_texts = [_phrase(w) + "." for w in ref_words]
    reference_text = " ".join(ref_texts)

    instance = EvaluationInstance(f"synthetic-{seed}", units, output_text, reference_text)
    out_texts = [_phrase(s.words) + "." for s in sentences]
    claims = tuple(make_claims(ref_texts, ClaimSource.REFERENCE) + make_claims(out_texts, ClaimSource.OUTPUT))

    table = RecordedJudge(f"recorded:synthetic-{seed}")
    output_premise = " ".join(out_texts)
    for text in ref_texts:
        table.add_verdict(output_premise, text, _label(output_premise, text))
    for text in out_texts:
        table.add_verdict(reference_text, text, _label(reference_text, text))
    for s, clean in zip(sentences, out_texts):
        valid = tuple(c for c in s.citations if c < n_units)
        if not valid:
            continue
        hyp = content_tokens(clean)
        per_unit = {c: content_tokens(units[c]) for c in valid}
        entailed = hyp <= frozenset().union(*per_unit.values())
        supporting = [c for c, toks in per_unit.items() if toks & hyp] if entailed else []
        table.add_support_for(CitedSentence(clean, valid, (0, 0), False), units, entailed, supporting)

    truth = SyntheticTruth(unit_words, tuple(sentences), tuple(ref_words))
    return RandomScenario(instance, claims, table, truth)
