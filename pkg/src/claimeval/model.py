"""Shared data model plus readers/writers for datasets, annotations and reports.

Every file format here is line-delimited JSON (one object per line) except
metric reports, which are written either as a JSON array or as CSV.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

PathLike = Union[str, os.PathLike]

REPORT_CSV_COLUMNS = ("instance_id", "metric_name", "value", "numerator", "denominator")


class DataError(ValueError):
    """Raised for malformed or inconsistent input files."""


class ClaimSource(str, Enum):
    REFERENCE = "reference"
    OUTPUT = "output"


class Entailment(str, Enum):
    """Binary entailment label."""

    ENTAILED = "entailed"
    NOT_ENTAILED = "not_entailed"


class NliLabel(str, Enum):
    """Three-way NLI label."""

    ENTAILMENT = "entailment"
    NEUTRAL = "neutral"
    CONTRADICTION = "contradiction"


def collapse(label: NliLabel | Entailment | str) -> Entailment:
    """Merge a 3-way label into the binary scheme (neutral and contradiction become one class)."""
    if isinstance(label, Entailment):
        return label
    try:
        label = NliLabel(label)
    except ValueError:
        try:
            return Entailment(label)
        except ValueError:
            raise ValueError(f"unknown entailment label: {label!r}") from None
    return Entailment.ENTAILED if label is NliLabel.ENTAILMENT else Entailment.NOT_ENTAILED


@dataclass(frozen=True)
class EvaluationInstance:
    id: str
    input_units: tuple[str, ...]
    output_text: str
    reference_text: str
    section_label: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise DataError("instance id must be a non-empty string")
        object.__setattr__(self, "input_units", tuple(self.input_units))
        for unit in self.input_units:
            if not isinstance(unit, str):
                raise DataError(f"instance {self.id}: input units must be strings")


@dataclass(frozen=True)
class Claim:
    text: str
    source: ClaimSource
    ordinal: int

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise DataError("claim text must be non-empty")
        object.__setattr__(self, "source", ClaimSource(self.source))
        if self.ordinal < 0:
            raise DataError("claim ordinal must be >= 0")


def make_claims(texts: Iterable[str], source: ClaimSource | str) -> list[Claim]:
    """Build claims with dense ordinals from 0, skipping blank strings."""
    texts = [t.strip() for t in texts if t and t.strip()]
    return [Claim(text=t, source=ClaimSource(source), ordinal=i) for i, t in enumerate(texts)]


@dataclass(frozen=True)
class Verdict:
    label: Entailment | NliLabel
    judge_id: str
    request_hash: str
    explanation: str | None = None
    parse_failed: bool = False

    @property
    def entailed(self) -> bool:
        return collapse(self.label) is Entailment.ENTAILED

    def binary(self) -> "Verdict":
        return Verdict(collapse(self.label), self.judge_id, self.request_hash,
                       self.explanation, self.parse_failed)


def format_percent(numerator: int, denominator: int) -> str:
    """Format ``100 * numerator / denominator`` with two decimals, rounding half up.

    Pure integer arithmetic, so the result never depends on float rounding.
    """
    if denominator <= 0:
        raise ValueError("denominator must be positive")
    if numerator < 0:
        raise ValueError("numerator must be non-negative")
    hundredths = (20000 * numerator + denominator) // (2 * denominator)
    return f"{hundredths // 100}.{hundredths % 100:02d}"


@dataclass(frozen=True)
class DetailItem:
    item: str
    outcome: str


@dataclass(frozen=True)
class MetricReport:
    """One metric value for one instance (or an aggregate row).

    Ratio metrics carry an exact ``numerator``/``denominator``; real-valued
    metrics such as BLEU leave both as ``None`` and set ``score`` instead.
    """

    instance_id: str
    metric_name: str
    numerator: int | None = None
    denominator: int | None = None
    score: float | None = None
    detail: tuple[DetailItem, ...] = ()
    degenerate: bool = False
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "detail", tuple(self.detail))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if self.numerator is None and self.score is None:
            raise ValueError("report needs either a ratio or a score")
        if self.numerator is not None:
            if self.denominator is None or self.denominator < 0:
                raise ValueError("ratio reports need a denominator >= 0")
            if not 0 <= self.numerator <= max(self.denominator, 0):
                raise ValueError("numerator must lie in [0, denominator]")
            if self.denominator == 0 and not self.degenerate:
                raise ValueError("zero denominator is only allowed on degenerate reports")

    @property
    def ratio(self) -> Fraction | None:
        if self.numerator is None:
            return None
        if self.denominator == 0:
            return Fraction(0)
        return Fraction(self.numerator, self.denominator)

    @property
    def value(self) -> float:
        """Percent in [0, 100]."""
        if self.numerator is None:
            return float(self.score)
        return float(100 * self.ratio)

    @property
    def formatted(self) -> str:
        if self.numerator is None:
            return f"{self.score:.2f}"
        if self.denominator == 0:
            return "0.00"
        return format_percent(self.numerator, self.denominator)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "metric_name": self.metric_name,
            "value": self.formatted,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "score": self.score,
            "degenerate": self.degenerate,
            "warnings": list(self.warnings),
            "detail": [{"item": d.item, "outcome": d.outcome} for d in self.detail],
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "MetricReport":
        num, den = obj.get("numerator"), obj.get("denominator")
        score = None
        if num in (None, ""):
            num = den = None
            raw = obj.get("score")
            score = float(obj["value"] if raw in (None, "") else raw)
        return cls(
            instance_id=str(obj["instance_id"]),
            metric_name=str(obj["metric_name"]),
            numerator=None if num is None else int(num),
            denominator=None if den is None else int(den),
            score=score,
            detail=tuple(DetailItem(d["item"], d["outcome"]) for d in obj.get("detail", ())),
            degenerate=_as_bool(obj.get("degenerate", False)),
            warnings=tuple(obj.get("warnings", ())),
        )


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes")
    return bool(value)


@dataclass(frozen=True)
class AnnotationRecord:
    pair_id: str
    evaluator_id: str
    score_a: float
    score_b: float
    subjective_preference: str

    def __post_init__(self) -> None:
        for name in ("score_a", "score_b"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DataError(f"{name} must be a number, got {value!r}")
            if not 0 <= value <= 100:
                raise DataError(f"{name}={value} is outside [0, 100]")
        if self.subjective_preference not in ("a", "b"):
            raise DataError(
                f"subjective_preference must be 'a' or 'b', got {self.subjective_preference!r}"
            )


# --------------------------------------------------------------------------
# file helpers


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def read_jsonl(path: PathLike) -> list[tuple[int, dict]]:
    """Return ``(line_number, object)`` pairs; blank lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: record must be an object")
            rows.append((lineno, obj))
    return rows


def write_jsonl(path: PathLike, rows: Iterable[Mapping]) -> None:
    atomic_write_text(path, "".join(dumps_line(r) + "\n" for r in rows))


# --------------------------------------------------------------------------
# datasets


def _instance_from_record(obj: dict, where: str) -> EvaluationInstance:
    try:
        units = obj["input_units"]
        output = obj["output"]
        reference = obj["reference"]
        inst_id = obj["id"]
    except KeyError as exc:
        raise DataError(f"{where}: missing field {exc.args[0]!r}") from None
    if not isinstance(units, list) or not all(isinstance(u, str) for u in units):
        raise DataError(f"{where}: input_units must be an array of strings")
    if not isinstance(output, str) or not isinstance(reference, str):
        raise DataError(f"{where}: output and reference must be strings")
    section = obj.get("section")
    if section is not None and not isinstance(section, str):
        raise DataError(f"{where}: section must be a string")
    try:
        return EvaluationInstance(str(inst_id), tuple(units), output, reference, section)
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def load_dataset(path: PathLike) -> list[EvaluationInstance]:
    """Read a dataset file, preserving file order.

    Raises:
        DataError: on a malformed line (the message names the line number)
            or on a duplicate instance id.
    """
    instances: list[EvaluationInstance] = []
    seen: dict[str, int] = {}
    for lineno, obj in read_jsonl(path):
        where = f"{path}:{lineno}"
        inst = _instance_from_record(obj, where)
        if inst.id in seen:
            raise DataError(f"{where}: duplicate id {inst.id!r} (first on line {seen[inst.id]})")
        seen[inst.id] = lineno
        instances.append(inst)
    return instances


def instance_to_record(inst: EvaluationInstance) -> dict:
    rec = {
        "id": inst.id,
        "input_units": list(inst.input_units),
        "output": inst.output_text,
        "reference": inst.reference_text,
    }
    if inst.section_label is not None:
        rec["section"] = inst.section_label
    return rec


def write_dataset(instances: Sequence[EvaluationInstance], path: PathLike) -> None:
    write_jsonl(path, (instance_to_record(i) for i in instances))


# --------------------------------------------------------------------------
# annotations


def load_annotations(path: PathLike) -> list[AnnotationRecord]:
    records = []
    for lineno, obj in read_jsonl(path):
        try:
            rec = AnnotationRecord(
                pair_id=str(obj["pair_id"]),
                evaluator_id=str(obj["evaluator_id"]),
                score_a=obj["score_a"],
                score_b=obj["score_b"],
                subjective_preference=obj["subjective_preference"],
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        records.append(rec)
    return records


def group_annotations(records: Iterable[AnnotationRecord]) -> dict[str, list[AnnotationRecord]]:
    grouped: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for rec in records:
        grouped[rec.pair_id].append(rec)
    return dict(grouped)


def mean_human_scores(records: Sequence[AnnotationRecord]) -> tuple[float, float]:
    """Mean evaluator score for output a and output b of one pair."""
    if not records:
        raise ValueError("no annotations")
    n = len(records)
    return (
        float(sum(Fraction(r.score_a) for r in records) / n),
        float(sum(Fraction(r.score_b) for r in records) / n),
    )


# --------------------------------------------------------------------------
# reports


def write_report(reports: Sequence[MetricReport], path: PathLike, format: str = "json") -> None:
    """Serialize reports deterministically (stable field order, 2-decimal values)."""
    if not reports:
        raise ValueError("no reports to write")
    if format == "json":
        text = json.dumps([r.to_dict() for r in reports], ensure_ascii=False, indent=2) + "\n"
    elif format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_CSV_COLUMNS)
        for r in reports:
            writer.writerow([
                r.instance_id,
                r.metric_name,
                r.formatted,
                "" if r.numerator is None else r.numerator,
                "" if r.denominator is None else r.denominator,
            ])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown report format {format!r}")
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc


def read_reports(path: PathLike) -> list[MetricReport]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    if path.suffix == ".csv":
        with path.open(encoding="utf-8", newline="") as fh:
            return [MetricReport.from_dict(row) for row in csv.DictReader(fh)]
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed report ({exc.msg})") from None
    if not isinstance(data, list):
        raise DataError(f"{path}: report must be a JSON array")
    return [MetricReport.from_dict(obj) for obj in data]
