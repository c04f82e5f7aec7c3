"""Offline test corpus: worked scenarios with recorded verdicts and a seeded instance generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from ..judges import RecordedJudge, extract_claims
from ..model import Claim, ClaimSource, EvaluationInstance, load_dataset
from .synthetic import RandomBounds, RandomScenario, random_instance

DATA_DIR = Path(__file__).parent / "data" / "v1"
SCENARIOS_PATH = DATA_DIR / "scenarios.jsonl"
SCENARIO_VERDICTS_PATH = DATA_DIR / "scenario_verdicts.jsonl"
SCENARIO_EXPECTED_PATH = DATA_DIR / "scenario_expected.json"
SMOKE_PATH = DATA_DIR / "smoke.jsonl"

__all__ = [
    "DATA_DIR", "SCENARIOS_PATH", "SCENARIO_VERDICTS_PATH", "SCENARIO_EXPECTED_PATH", "SMOKE_PATH",
    "Scenario", "scenario_catalog", "RandomBounds", "RandomScenario", "random_instance",
]


@dataclass(frozen=True)
class Scenario:
    """One worked example: an instance, its reference claims, recorded verdicts and expected ratios."""

    name: str
    instance: EvaluationInstance
    claims: tuple[Claim, ...]
    verdict_table: RecordedJudge
    expected: Mapping[str, tuple[int, int]]


def scenario_catalog() -> list[Scenario]:
    """Load every shipped scenario, in file order."""
    judge = RecordedJudge.load(SCENARIO_VERDICTS_PATH, judge_id="recorded:scenarios")
    expected = json.loads(SCENARIO_EXPECTED_PATH.read_text(encoding="utf-8"))
    out = []
    for inst in load_dataset(SCENARIOS_PATH):
        claims = tuple(extract_claims(judge, inst.reference_text, ClaimSource.REFERENCE))
        exp = {name: (int(n), int(d)) for name, (n, d) in expected[inst.id].items()}
        out.append(Scenario(inst.id, inst, claims, judge, exp))
    return out
