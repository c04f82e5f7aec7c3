"""Claim recall/precision and citation recall/precision.

All four are exact integer ratios stored on :class:`MetricReport`.
Degenerate denominators (no output claims, no citations at all) score 0
with ``degenerate=True`` instead of raising.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .judges import Judge, select_supporting_citations
from .model import Claim, ClaimSource, DetailItem, EvaluationInstance, MetricReport
from .segment import CitedSentence, cite_sentences, strip_citations, validate_citations

CLAIM_RECALL = "claim_recall"
CLAIM_PRECISION = "claim_precision"
CITATION_RECALL = "citation_recall"
CITATION_PRECISION = "citation_precision"
FACTUALITY_METRICS = (CLAIM_RECALL, CLAIM_PRECISION, CITATION_RECALL, CITATION_PRECISION)


def _claim_report(instance_id: str, name: str, premise: str, claims: Sequence[Claim],
                  judge: Judge) -> MetricReport:
    if premise.strip():
        verdicts = judge.map(lambda c: judge.entail(premise, c.text), claims)
        labels = [v.label.value + (" (parse_failed)" if v.parse_failed else "") for v in verdicts]
        hits = sum(v.entailed for v in verdicts)
        warnings = ()
    else:
        labels = ["not_entailed"] * len(claims)
        hits = 0
        warnings = ("empty premise; no claim can be entailed",)
    return MetricReport(
        instance_id=instance_id,
        metric_name=name,
        numerator=hits,
        denominator=len(claims),
        detail=tuple(DetailItem(c.text, lab) for c, lab in zip(claims, labels)),
        degenerate=not claims,
        warnings=warnings,
    )


def claim_recall(instance: EvaluationInstance, reference_claims: Sequence[Claim],
                 judge: Judge) -> MetricReport:
    """Share of reference claims entailed by the (marker-free) output."""
    if not reference_claims:
        raise ValueError(f"{instance.id}: reference decomposed into no claims")
    if any(c.source is not ClaimSource.REFERENCE for c in reference_claims):
        raise ValueError("claim_recall expects reference claims")
    premise = strip_citations(instance.output_text)
    return _claim_report(instance.id, CLAIM_RECALL, premise, reference_claims, judge)


def claim_precision(instance: EvaluationInstance, output_claims: Sequence[Claim],
                    judge: Judge) -> MetricReport:
    """Share of output claims entailed by the reference."""
    if any(c.source is not ClaimSource.OUTPUT for c in output_claims):
        raise ValueError("claim_precision expects output claims")
    if not output_claims:
        return MetricReport(instance.id, CLAIM_PRECISION, 0, 0, degenerate=True,
                            warnings=("output has no claims",))
    premise = strip_citations(instance.reference_text)
    return _claim_report(instance.id, CLAIM_PRECISION, premise, output_claims, judge)


@dataclass(frozen=True)
class _SentenceOutcome:
    sentence: CitedSentence
    entailed: bool
    supporting: frozenset[int]
    note: str


def _judge_sentences(instance: EvaluationInstance, judge: Judge, include_headings: bool):
    sentences = [s for s in cite_sentences(instance.output_text)
                 if include_headings or not s.is_heading]
    n_units = len(instance.input_units)
    warnings = validate_citations(sentences, n_units, where=instance.id)

    def judge_one(s: CitedSentence) -> _SentenceOutcome:
        valid = tuple(c for c in s.citations if 0 <= c < n_units)
        if not valid:
            note = "no_citation" if not s.citations else "invalid_citations"
            return _SentenceOutcome(s, False, frozenset(), note)
        usable = CitedSentence(s.clean_text, valid, s.char_span, s.is_heading)
        res = select_supporting_citations(judge, usable, instance.input_units)
        note = "entailed" if res.entailed else "not_entailed"
        if res.parse_failed:
            note += " (parse_failed)"
        return _SentenceOutcome(s, res.entailed, res.supporting if res.entailed else frozenset(), note)

    return judge.map(judge_one, sentences), tuple(warnings)


def citation_metrics(instance: EvaluationInstance, judge: Judge,
                     include_headings: bool = False) -> tuple[MetricReport, MetricReport]:
    """Citation recall and precision from one judge call per cited sentence.

    Out-of-range citation numbers are reported as warnings; they can never
    support a sentence, so they count as 0 toward precision.
    """
    outcomes, warnings = _judge_sentences(instance, judge, include_headings)
    recall_detail = [DetailItem(o.sentence.clean_text, o.note) for o in outcomes]
    n_entailed = sum(o.entailed for o in outcomes)
    recall = MetricReport(
        instance.id, CITATION_RECALL, n_entailed, len(outcomes),
        detail=tuple(recall_detail), degenerate=not outcomes,
        warnings=warnings + (("output has no sentences",) if not outcomes else ()),
    )
    prec_detail = []
    for o in outcomes:
        for c in o.sentence.citations:
            prec_detail.append(DetailItem(f"{o.sentence.clean_text} [{c}]", "1" if c in o.supporting else "0"))
    n_cites = len(prec_detail)
    precision = MetricReport(
        instance.id, CITATION_PRECISION,
        sum(d.outcome == "1" for d in prec_detail), n_cites,
        detail=tuple(prec_detail), degenerate=n_cites == 0,
        warnings=warnings + (("output has no citations",) if n_cites == 0 else ()),
    )
    return recall, precision


def citation_recall(instance: EvaluationInstance, judge: Judge,
                    include_headings: bool = False) -> MetricReport:
    """Share of (non-heading) output sentences entailed by their cited units."""
    return citation_metrics(instance, judge, include_headings)[0]


def citation_precision(instance: EvaluationInstance, judge: Judge,
                       include_headings: bool = False) -> MetricReport:
    """Share of all citations that support an entailed sentence."""
    return citation_metrics(instance, judge, include_headings)[1]


AGGREGATE_ID = "__mean__"


def aggregate(reports: Iterable[MetricReport], label: str = AGGREGATE_ID) -> list[MetricReport]:
    """Unweighted mean of per-instance values, per metric (exact for ratio metrics).

    The mean of ratios is itself a ratio, so ratio metrics aggregate to a
    reduced ``numerator/denominator``; real-valued ones carry a float score.
    Output order follows first appearance of each metric.
    """
    ratios: dict[str, list[Fraction]] = defaultdict(list)
    scores: dict[str, list[float]] = defaultdict(list)
    order: dict[str, None] = {}
    for r in reports:
        order.setdefault(r.metric_name, None)
        if r.numerator is None:
            scores[r.metric_name].append(r.score)
        else:
            ratios[r.metric_name].append(r.ratio)
    out = []
    for name in order:
        if name in ratios and name in scores:
            raise ValueError(f"metric {name} mixes ratio and score reports")
        if name in ratios:
            vals = ratios[name]
            mean = sum(vals, Fraction(0)) / len(vals)
            out.append(MetricReport(label, name, mean.numerator, mean.denominator,
                                    detail=(DetailItem("n_instances", str(len(vals))),)))
        else:
            vals = scores[name]
            out.append(MetricReport(label, name, score=sum(vals) / len(vals),
                                    detail=(DetailItem("n_instances", str(len(vals))),)))
    return out
