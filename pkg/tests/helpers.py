"""Small helpers shared by several test modules."""

from __future__ import annotations

from claimeval.metrics import citation_metrics, claim_recall


def scenario_ratios(scenario):
    """Score a shipped scenario with its recorded judge; metric name -> report."""
    judge = scenario.verdict_table
    inst = scenario.instance
    got = {}
    if "claim_recall" in scenario.expected:
        got["claim_recall"] = claim_recall(inst, scenario.claims, judge)
    if {"citation_recall", "citation_precision"} & set(scenario.expected):
        rec, prec = citation_metrics(inst, judge)
        got["citation_recall"], got["citation_precision"] = rec, prec
    return got
