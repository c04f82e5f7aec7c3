"""Rank correlations, disagreement mining and agreement with human preferences."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .model import AnnotationRecord, MetricReport, atomic_write_text, format_percent, group_annotations, mean_human_scores

logger = logging.getLogger(__name__)

KENDALL_VARIANT = "tau-b"


class UndefinedCorrelation(ValueError):
    """The coefficient has a zero denominator (constant or all-tied input)."""


class Stat(str, Enum):
    KENDALL = "kendall"
    SPEARMAN = "spearman"


def _as_arrays(xs: Sequence[float], ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(x) < 2:
        raise ValueError("need at least 2 observations")
    return x, y


def kendall_tau(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Kendall tau-b with tie correction in both variables."""
    x, y = _as_arrays(xs, ys)
    n = len(x)
    iu = np.triu_indices(n, k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    n0 = n * (n - 1) // 2
    untied_x = n0 - int(np.count_nonzero(sx == 0))
    untied_y = n0 - int(np.count_nonzero(sy == 0))
    if untied_x == 0 or untied_y == 0:
        raise UndefinedCorrelation("kendall tau undefined: an input is constant")
    s = int(np.sum(sx * sy))
    return s / math.sqrt(untied_x * untied_y)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman_rho(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    x, y = _as_arrays(xs, ys)
    rx = average_ranks(x) - (len(x) + 1) / 2
    ry = average_ranks(y) - (len(y) + 1) / 2
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("spearman rho undefined: an input has zero rank variance")
    return float(rx @ ry) / math.sqrt(sxx * syy)


STATS: dict[Stat, Callable[[Sequence[float], Sequence[float]], float]] = {
    Stat.KENDALL: kendall_tau,
    Stat.SPEARMAN: spearman_rho,
}


# --------------------------------------------------------------------------
# metric-vs-metric


@dataclass(frozen=True)
class ScoreVector:
    metric_name: str
    scores: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", tuple((str(i), float(v)) for i, v in self.scores))
        ids = [i for i, _ in self.scores]
        if len(set(ids)) != len(ids):
            dup = next(i for i, c in Counter(ids).items() if c > 1)
            raise ValueError(f"{self.metric_name}: duplicate instance id {dup!r}")

    def as_dict(self) -> dict[str, float]:
        return dict(self.scores)


def score_vectors(reports: Iterable[MetricReport], skip_ids: Iterable[str] = ("__mean__",)) -> list[ScoreVector]:
    """One vector per metric name, in first-appearance order; aggregate rows skipped."""
    skip = set(skip_ids)
    grouped: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for r in reports:
        if r.instance_id not in skip:
            grouped[r.metric_name].append((r.instance_id, r.value))
    return [ScoreVector(name, tuple(vals)) for name, vals in grouped.items()]


def pairwise(a: ScoreVector, b: ScoreVector, stat: Stat | str = Stat.KENDALL) -> tuple[float | None, int]:
    """Coefficient on the id intersection and its size; None when undefined."""
    da, db = a.as_dict(), b.as_dict()
    common = [i for i, _ in a.scores if i in db]
    if len(common) < 2:
        return None, len(common)
    try:
        return STATS[Stat(stat)]([da[i] for i in common], [db[i] for i in common]), len(common)
    except UndefinedCorrelation:
        return None, len(common)


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    stat: Stat
    cells: tuple[tuple[float | None, ...], ...]
    support: tuple[tuple[int, ...], ...]

    def get(self, a: str, b: str) -> float | None:
        return self.cells[self.names.index(a)][self.names.index(b)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.stat.value, *self.names])
        for name, row in zip(self.names, self.cells):
            w.writerow([name, *("" if c is None else f"{c:.6f}" for c in row)])
        return buf.getvalue()

    def to_long_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric_a", "metric_b", "coefficient", "n", "stat"])
        variant = KENDALL_VARIANT if self.stat is Stat.KENDALL else self.stat.value
        for i, a in enumerate(self.names):
            for j, b in enumerate(self.names):
                c = self.cells[i][j]
                w.writerow([a, b, "" if c is None else f"{c:.6f}", self.support[i][j], variant])
        return buf.getvalue()

    def write(self, path, long_path=None) -> None:
        atomic_write_text(path, self.to_csv())
        if long_path is not None:
            atomic_write_text(long_path, self.to_long_csv())


def correlation_matrix(vectors: Sequence[ScoreVector], stat: Stat | str = Stat.KENDALL) -> CorrelationMatrix:
    """Symmetric matrix of pairwise coefficients; undefined cells are None, never 0."""
    stat = Stat(stat)
    if len(vectors) < 2:
        raise ValueError("need at least 2 score vectors")
    names = [v.metric_name for v in vectors]
    if len(set(names)) != len(names):
        raise ValueError("metric names must be unique")
    k = len(vectors)
    cells: list[list[float | None]] = [[None] * k for _ in range(k)]
    support = [[0] * k for _ in range(k)]
    for i in range(k):
        cells[i][i] = 1.0
        support[i][i] = len(vectors[i].scores)
        for j in range(i + 1, k):
            c, n = pairwise(vectors[i], vectors[j], stat)
            cells[i][j] = cells[j][i] = c
            support[i][j] = support[j][i] = n
            if c is None:
                logger.warning("%s vs %s: no defined %s coefficient (%d shared ids)",
                               names[i], names[j], stat.value, n)
    return CorrelationMatrix(tuple(names), stat, tuple(map(tuple, cells)), tuple(map(tuple, support)))


# --------------------------------------------------------------------------
# paired outputs


@dataclass(frozen=True)
class PreferencePair:
    """Two outputs for the same instance, with metric scores for each."""

    pair_id: str
    instance_id: str
    scores_a: Mapping[str, float]
    scores_b: Mapping[str, float]
    group: str = ""

    def diff(self, metric: str) -> float:
        try:
            return self.scores_a[metric] - self.scores_b[metric]
        except KeyError:
            raise KeyError(f"pair {self.pair_id} has no {metric!r} score") from None


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def find_disagreements(pairs: Iterable[PreferencePair], metric_a: str, metric_b: str) -> list[PreferencePair]:
    """Pairs the two metrics rank in strictly opposite order (ties never count)."""
    return [p for p in pairs if _sign(p.diff(metric_a)) * _sign(p.diff(metric_b)) == -1]


class TiePolicy(str, Enum):
    EXCLUDE = "exclude"


@dataclass(frozen=True)
class PairAgreement:
    pair_id: str
    human: str | None
    metric: str | None
    outcome: str  # agree | disagree | metric_tie | human_tie


@dataclass(frozen=True)
class AgreementResult:
    metric: str
    n_agree: int
    n_compared: int
    metric_ties: tuple[str, ...]
    human_ties: tuple[str, ...]
    per_pair: tuple[PairAgreement, ...]

    @property
    def fraction(self) -> str | None:
        """Percent with two decimals, or None when every pair was a tie."""
        return format_percent(self.n_agree, self.n_compared) if self.n_compared else None

    def to_report(self) -> MetricReport:
        return MetricReport("__agreement__", f"human_agreement:{self.metric}", self.n_agree,
                            self.n_compared, degenerate=self.n_compared == 0,
                            warnings=("no pair with a strict metric preference",) if not self.n_compared else ())


def majority_preference(records: Sequence[AnnotationRecord], tie_policy: TiePolicy | str | None = None) -> str | None:
    """Majority of ``subjective_preference``; None on a tied vote (tie policy required)."""
    n = len(records)
    if tie_policy is None and (n < 3 or n % 2 == 0):
        raise ValueError(f"{n} annotators cannot give a majority without a tie policy")
    votes = Counter(r.subjective_preference for r in records)
    if votes["a"] == votes["b"]:
        return None
    return "a" if votes["a"] > votes["b"] else "b"


def human_agreement(pairs: Sequence[PreferencePair], annotations: Iterable[AnnotationRecord], metric: str,
                    tie_policy: TiePolicy | str | None = None) -> AgreementResult:
    """Share of pairs where the metric's preferred output matches the human majority.

    Pairs the metric scores equally go to ``metric_ties`` and leave the
    denominator. Tied human votes (possible only with a tie policy) go to
    ``human_ties`` and are likewise excluded.
    """
    if tie_policy is not None:
        tie_policy = TiePolicy(tie_policy)
    grouped = group_annotations(annotations)
    per_pair = []
    for p in pairs:
        recs = grouped.get(p.pair_id)
        if not recs:
            raise ValueError(f"pair {p.pair_id} has no annotations")
        human = majority_preference(recs, tie_policy)
        s = _sign(p.diff(metric))
        machine = None if s == 0 else ("a" if s > 0 else "b")
        if machine is None:
            outcome = "metric_tie"
        elif human is None:
            outcome = "human_tie"
        else:
            outcome = "agree" if machine == human else "disagree"
        per_pair.append(PairAgreement(p.pair_id, human, machine, outcome))
    n_agree = sum(x.outcome == "agree" for x in per_pair)
    n_compared = n_agree + sum(x.outcome == "disagree" for x in per_pair)
    result = AgreementResult(
        metric, n_agree, n_compared,
        tuple(x.pair_id for x in per_pair if x.outcome == "metric_tie"),
        tuple(x.pair_id for x in per_pair if x.outcome == "human_tie"),
        tuple(per_pair),
    )
    if not n_compared:
        logger.warning("%s: no pair with a strict metric preference; agreement undefined", metric)
    return result


def human_metric_correlation(pairs: Sequence[PreferencePair], annotations: Iterable[AnnotationRecord],
                             metric: str, group_key: Callable[[PreferencePair], Hashable] | None = None
                             ) -> tuple[float, float] | dict[Hashable, tuple[float, float]]:
    """(spearman rho, kendall tau) between metric scores and mean human scores.

    Both outputs of every pair are pooled into one list. With ``group_key``
    the pooling happens per group and a dict keyed by group is returned.
    """
    grouped = group_annotations(annotations)

    def corr(subset: Sequence[PreferencePair]) -> tuple[float, float]:
        machine, human = [], []
        for p in subset:
            recs = grouped.get(p.pair_id)
            if not recs:
                raise ValueError(f"pair {p.pair_id} has no annotations")
            ha, hb = mean_human_scores(recs)
            machine += [p.scores_a[metric], p.scores_b[metric]]
            human += [ha, hb]
        return spearman_rho(machine, human), kendall_tau(machine, human)

    if group_key is None:
        return corr(pairs)
    buckets: dict[Hashable, list[PreferencePair]] = defaultdict(list)
    for p in pairs:
        buckets[group_key(p)].append(p)
    return {g: corr(ps) for g, ps in buckets.items()}
