"""NLI accuracy benchmark in the 2-way (merged) and 3-way settings."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .judges import Judge, JudgmentError, judge_entailment, judge_entailment_3way
from .model import DataError, Entailment, MetricReport, NliLabel, collapse, format_percent, read_jsonl
from .prompts import Exemplar, PromptStyle

logger = logging.getLogger(__name__)


class BenchMode(str, Enum):
    TWO_WAY = "two_way"
    THREE_WAY = "three_way"


@dataclass(frozen=True)
class NliItem:
    premise: str
    hypothesis: str
    gold: NliLabel
    id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold", NliLabel(self.gold))


@dataclass(frozen=True)
class ItemOutcome:
    gold: str
    predicted: str
    correct: bool
    failed: bool = False


@dataclass(frozen=True)
class BenchResult:
    mode: BenchMode
    style: str
    shots: int
    n_items: int
    n_correct: int
    per_item: tuple[ItemOutcome, ...]
    exemplar_ids: tuple[str, ...] = ()

    @property
    def accuracy(self) -> str:
        return format_percent(self.n_correct, self.n_items)

    def to_report(self, name: str | None = None) -> MetricReport:
        return MetricReport(name or f"{self.style}/{self.shots}-shot", f"nli_accuracy_{self.mode.value}",
                            self.n_correct, self.n_items)


def map_to_binary(label: NliLabel | str) -> Entailment:
    """entailment -> entailed; neutral and contradiction -> not_entailed."""
    try:
        return collapse(NliLabel(label))
    except ValueError:
        raise ValueError(f"unknown NLI label {label!r}") from None


def run_benchmark(items: Sequence[NliItem], judge: Judge, mode: BenchMode | str = BenchMode.TWO_WAY,
                  strict: bool = False, style: str = "", shots: int = 0,
                  exemplar_ids: Sequence[str] = ()) -> BenchResult:
    """Score ``judge`` against gold labels.

    In two_way mode gold labels are merged before comparison. A judge failure
    aborts in strict mode and otherwise counts the item wrong with
    ``failed=True``. Gateway errors (including replay misses) always abort.
    """
    if not items:
        raise ValueError("no NLI items")
    mode = BenchMode(mode)

    def one(item: NliItem) -> ItemOutcome:
        gold = map_to_binary(item.gold).value if mode is BenchMode.TWO_WAY else item.gold.value
        try:
            if mode is BenchMode.TWO_WAY:
                verdict = judge_entailment(judge, item.premise, item.hypothesis)
                pred = collapse(verdict.label).value
            else:
                verdict = judge_entailment_3way(judge, item.premise, item.hypothesis)
                if not isinstance(verdict.label, NliLabel):
                    raise JudgmentError(f"{judge.id} cannot give 3-way labels")
                pred = verdict.label.value
        except JudgmentError:
            if strict:
                raise
            logger.warning("judge failed on NLI item %s; counted incorrect", item.id or item.hypothesis[:40])
            return ItemOutcome(gold, "", False, failed=True)
        failed = verdict.parse_failed
        return ItemOutcome(gold, pred, pred == gold and not failed, failed)

    outcomes = tuple(judge.map(one, items))
    return BenchResult(mode, style, shots, len(outcomes), sum(o.correct for o in outcomes),
                       outcomes, tuple(exemplar_ids))


LABEL_ALIASES = {
    "entailment": "entailment", "e": "entailment", "0": "entailment",
    "neutral": "neutral", "n": "neutral", "1": "neutral",
    "contradiction": "contradiction", "c": "contradiction", "2": "contradiction",
}
"""Integer codes follow the common ANLI/SNLI convention (0 entailment, 1 neutral, 2 contradiction)."""

FIELD_PRESETS: dict[str, Mapping[str, str]] = {
    "default": {"premise": "premise", "hypothesis": "hypothesis", "label": "label"},
    "anli": {"premise": "premise", "hypothesis": "hypothesis", "label": "label", "id": "uid"},
    "mednli": {"premise": "sentence1", "hypothesis": "sentence2", "label": "gold_label", "id": "pairID"},
}


def load_nli(path, field_map: Mapping[str, str] | str = "default") -> list[NliItem]:
    """Read NLI items, renaming dataset-native fields through ``field_map``."""
    fmap = FIELD_PRESETS[field_map] if isinstance(field_map, str) else field_map
    items = []
    for lineno, obj in read_jsonl(path):
        try:
            raw_label = str(obj[fmap["label"]]).strip().lower()
            label = LABEL_ALIASES[raw_label]
            item_id = str(obj.get(fmap.get("id", "id"), f"line{lineno}"))
            items.append(NliItem(str(obj[fmap["premise"]]), str(obj[fmap["hypothesis"]]), label, item_id))
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field or unknown label {exc.args[0]!r}") from None
    return items


def select_exemplars(train: Sequence[NliItem], mode: BenchMode | str, shots: int,
                     explanations: Mapping[str, str] | None = None
                     ) -> tuple[list[Exemplar], list[str]]:
    """Pick ``shots`` exemplars cycling through the classes, one example per class per round.

    With shots equal to the number of classes this gives one example for
    each class. Returns the exemplars and their item ids.
    """
    mode = BenchMode(mode)
    if mode is BenchMode.TWO_WAY:
        classes = [Entailment.ENTAILED.value, Entailment.NOT_ENTAILED.value]
        key = lambda it: map_to_binary(it.gold).value  # noqa: E731
    else:
        classes = [l.value for l in NliLabel]
        key = lambda it: it.gold.value  # noqa: E731
    pools = {c: [it for it in train if key(it) == c] for c in classes}
    chosen: list[NliItem] = []
    round_ = 0
    while len(chosen) < shots:
        progressed = False
        for c in classes:
            if len(chosen) == shots:
                break
            if round_ < len(pools[c]):
                chosen.append(pools[c][round_])
                progressed = True
        if not progressed:
            raise ValueError(f"training pool has too few items for {shots} shots")
        round_ += 1
    explanations = explanations or {}
    exemplars, ids = [], []
    for it in chosen:
        if mode is BenchMode.TWO_WAY:
            pred = 1 if map_to_binary(it.gold) is Entailment.ENTAILED else 0
        else:
            pred = it.gold.value
        out = {"entailment_prediction": pred}
        if it.id in explanations:
            out["explanation"] = explanations[it.id]
        exemplars.append(({"premise": it.premise, "hypothesis": it.hypothesis}, out))
        ids.append(it.id)
    return exemplars, ids


def format_grid(results: Sequence[BenchResult]) -> str:
    """One line per (style, shots) cell, in the order given."""
    names = {PromptStyle.NL.value: "NL", PromptStyle.JSON.value: "Json", PromptStyle.JSON_COT.value: "Json+CoT"}
    lines = [f"{'prompt style':<22}{'mode':<11}{'n':>6}{'accuracy':>10}"]
    for r in results:
        label = f"{names.get(r.style, r.style or '-')}, {r.shots}-shot"
        lines.append(f"{label:<22}{r.mode.value:<11}{r.n_items:>6}{r.accuracy:>10}")
    return "\n".join(lines)
