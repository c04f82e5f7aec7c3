"""Attach out-of-process scorers (BERTScore, MEDCON, ...) through files.

The toolkit writes ``{"id", "candidate", "reference"}`` lines, runs the
configured command with ``{input}`` and ``{output}`` placeholders replaced by
file paths, and reads back ``{"id", "metric_name", "value"}`` lines with
values in percent.
"""

from __future__ import annotations

import subprocess
import tempfile
from pathlib import Path
from typing import Sequence

from .model import DataError, EvaluationInstance, MetricReport, read_jsonl, write_jsonl


class ExternalScorerError(RuntimeError):
    pass


def run_external_scorer(command: Sequence[str], instances: Sequence[EvaluationInstance],
                        timeout: float | None = None) -> list[MetricReport]:
    if not command:
        raise ValueError("empty scorer command")
    with tempfile.TemporaryDirectory(prefix="claimeval-ext-") as tmp:
        inp = Path(tmp) / "pairs.jsonl"
        out = Path(tmp) / "scores.jsonl"
        write_jsonl(inp, ({"id": i.id, "candidate": i.output_text, "reference": i.reference_text}
                          for i in instances))
        argv = [a.replace("{input}", str(inp)).replace("{output}", str(out)) for a in command]
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0:
            raise ExternalScorerError(
                f"scorer exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        try:
            rows = read_jsonl(out)
        except DataError as exc:
            raise ExternalScorerError(f"scorer output unreadable: {exc}") from None
    known = {i.id for i in instances}
    reports = []
    for lineno, row in rows:
        try:
            inst_id, name, value = str(row["id"]), str(row["metric_name"]), float(row["value"])
        except (KeyError, TypeError, ValueError):
            raise ExternalScorerError(f"scorer output line {lineno} is malformed") from None
        if inst_id not in known:
            raise ExternalScorerError(f"scorer returned unknown id {inst_id!r}")
        reports.append(MetricReport(inst_id, name, score=value))
    return reports
