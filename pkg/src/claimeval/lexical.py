"""ROUGE-N, ROUGE-L and corpus BLEU over a simple lowercase/non-alphanumeric tokenizer.

Scores are percentages. No stemming and no synonym matching, so numbers are
comparable to other ROUGE implementations only qualitatively.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .model import MetricReport

_SPLIT = re.compile(r"[^0-9A-Za-z]+")
BLEU_EPSILON = 1e-9


@dataclass(frozen=True)
class LexicalConfig:
    lowercase: bool = True
    tokenizer: str = "nonalnum_split"
    bleu_max_order: int = 4
    bleu_smoothing: str = "none_with_epsilon"

    def __post_init__(self) -> None:
        if self.bleu_max_order < 1:
            raise ValueError("bleu_max_order must be >= 1")
        if self.tokenizer != "nonalnum_split":
            raise ValueError(f"unsupported tokenizer {self.tokenizer!r}")
        if self.bleu_smoothing != "none_with_epsilon":
            raise ValueError(f"unsupported smoothing {self.bleu_smoothing!r}")


DEFAULT_CONFIG = LexicalConfig()


class PRF(NamedTuple):
    recall: float
    precision: float
    f1: float


def tokenize(text: str, config: LexicalConfig = DEFAULT_CONFIG) -> list[str]:
    if config.lowercase:
        text = text.lower()
    return [t for t in _SPLIT.split(text) if t]


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _prf(hits: int, n_ref: int, n_cand: int) -> PRF:
    r = 100.0 * hits / n_ref if n_ref else 0.0
    p = 100.0 * hits / n_cand if n_cand else 0.0
    f = 2 * r * p / (r + p) if r + p else 0.0
    return PRF(r, p, f)


def rouge_n_counts(candidate: str, reference: str, n: int,
                   config: LexicalConfig = DEFAULT_CONFIG) -> tuple[int, int, int]:
    """(clipped overlap, reference n-gram count, candidate n-gram count)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = ngrams(tokenize(candidate, config), n)
    ref = ngrams(tokenize(reference, config), n)
    return sum((cand & ref).values()), sum(ref.values()), sum(cand.values())


def rouge_n(candidate: str, reference: str, n: int,
            config: LexicalConfig = DEFAULT_CONFIG) -> PRF:
    return _prf(*rouge_n_counts(candidate, reference, n, config))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_counts(candidate: str, reference: str,
                   config: LexicalConfig = DEFAULT_CONFIG) -> tuple[int, int, int]:
    """(LCS length, reference length, candidate length) in tokens."""
    cand, ref = tokenize(candidate, config), tokenize(reference, config)
    return lcs_length(cand, ref), len(ref), len(cand)


def rouge_l(candidate: str, reference: str, config: LexicalConfig = DEFAULT_CONFIG) -> PRF:
    return _prf(*rouge_l_counts(candidate, reference, config))


def bleu(candidates: Sequence[str], references: Sequence[str],
         config: LexicalConfig = DEFAULT_CONFIG) -> float:
    """Corpus BLEU (single reference) in percent.

    Modified n-gram precisions are pooled over the corpus for n = 1..max_order;
    a zero precision (including 0/0) is floored at 1e-9 before the geometric
    mean. Brevity penalty is ``exp(1 - r/c)`` when the candidate corpus is
    shorter than the reference corpus.
    """
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    N = config.bleu_max_order
    matches = [0] * N
    totals = [0] * N
    c_len = r_len = 0
    for cand_text, ref_text in zip(candidates, references):
        cand, ref = tokenize(cand_text, config), tokenize(ref_text, config)
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, N + 1):
            cn, rn = ngrams(cand, n), ngrams(ref, n)
            matches[n - 1] += sum((cn & rn).values())
            totals[n - 1] += sum(cn.values())
    if c_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        p = m / t if t else 0.0
        log_p += math.log(max(p, BLEU_EPSILON))
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100.0 * bp * math.exp(log_p / N)


def rouge_reports(instance_id: str, candidate: str, reference: str, variant: str,
                  config: LexicalConfig = DEFAULT_CONFIG) -> list[MetricReport]:
    """Per-instance ROUGE recall/precision/F1 as exact ratio reports.

    ``variant`` is ``"1"``, ``"2"`` or ``"l"``. F1 equals
    ``2 * overlap / (|cand| + |ref|)``, so it is an integer ratio as well.
    """
    if variant.lower() == "l":
        hits, n_ref, n_cand = rouge_l_counts(candidate, reference, config)
    else:
        hits, n_ref, n_cand = rouge_n_counts(candidate, reference, int(variant), config)
    name = f"rouge_{variant.lower()}"
    out = []
    for suffix, num, den in (("recall", hits, n_ref), ("precision", hits, n_cand),
                             ("f1", 2 * hits, n_ref + n_cand)):
        out.append(MetricReport(instance_id, f"{name}_{suffix}", num if den else 0, den,
                                degenerate=den == 0))
    return out
