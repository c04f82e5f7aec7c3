"""Command-line entry point: evaluate, claims, nli-bench, correlate, agree, generate.

Exit status: 0 success (warnings allowed), 1 configuration or input error,
2 judgment or gateway failure (strict-mode parse failures, replay misses,
exhausted retries).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from . import __version__
from .analysis import (
    PreferencePair,
    Stat,
    TiePolicy,
    UndefinedCorrelation,
    correlation_matrix,
    human_agreement,
    human_metric_correlation,
    score_vectors,
)
from .external import ExternalScorerError, run_external_scorer
from .gateway import DEFAULT_API_KEY_ENV, DEFAULT_ENDPOINT, CacheMode, Gateway, GatewayError
from .judges import (
    Judge,
    JudgmentError,
    LexicalOracleJudge,
    LLMJudge,
    RecordedJudge,
    extract_claims,
)
from .lexical import bleu, rouge_reports
from .metrics import (
    AGGREGATE_ID,
    CITATION_PRECISION,
    CITATION_RECALL,
    CLAIM_PRECISION,
    CLAIM_RECALL,
    FACTUALITY_METRICS,
    aggregate,
    citation_metrics,
    claim_precision,
    claim_recall,
)
from .model import (
    Claim,
    ClaimSource,
    DataError,
    EvaluationInstance,
    MetricReport,
    atomic_write_text,
    dumps_line,
    instance_to_record,
    load_annotations,
    load_dataset,
    make_claims,
    read_jsonl,
    read_reports,
    write_report,
)
from .nli import BenchMode, format_grid, load_nli, run_benchmark, select_exemplars
from .prompts import ANLI_EXEMPLAR, PromptConfig, PromptError, PromptStyle, Task, render_prompt
from .segment import cite_sentences, out_of_range_citations, strip_citations

logger = logging.getLogger("claimeval")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_JUDGMENT = 2

LEXICAL_METRICS = ("rouge_1", "rouge_2", "rouge_l", "bleu")
KNOWN_METRICS = FACTUALITY_METRICS + LEXICAL_METRICS
CORPUS_ID = "__corpus__"


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class JudgeSpec:
    kind: str = "llm"
    model_name: str = "gpt-4"
    style: str = PromptStyle.JSON_COT.value
    shots: int = 0
    temperature: float = 0.0
    exemplars: str | None = None
    verdicts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("llm", "lexical_oracle", "recorded"):
            raise ConfigError(f"unknown judge kind {self.kind!r}")
        try:
            PromptStyle(self.style)
        except ValueError:
            raise ConfigError(f"unknown prompt style {self.style!r}") from None
        object.__setattr__(self, "verdicts", tuple(self.verdicts))
        if self.kind == "recorded" and not self.verdicts:
            raise ConfigError("a recorded judge needs at least one verdict file")


@dataclass(frozen=True)
class RunConfig:
    run_id: str = "run"
    judge: JudgeSpec = field(default_factory=JudgeSpec)
    cache_dir: str | None = None
    cache_mode: str = CacheMode.READ_WRITE.value
    parallelism: int = 4
    rate_limit_per_minute: int | None = None
    endpoint: str = DEFAULT_ENDPOINT
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_retries: int = 4
    timeout: float = 120.0
    dataset: str | None = None
    metrics: tuple[str, ...] = FACTUALITY_METRICS + ("rouge_l",)
    strict: bool = False
    include_headings: bool = False
    out: str = "out"
    reference_claims: str | None = None
    output_claims: str | None = None
    external_scorers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        try:
            CacheMode(self.cache_mode)
        except ValueError:
            raise ConfigError(f"unknown cache mode {self.cache_mode!r}") from None
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        object.__setattr__(self, "metrics", tuple(self.metrics))
        scorers = {str(k): tuple(v) for k, v in dict(self.external_scorers).items()}
        object.__setattr__(self, "external_scorers", scorers)
        for m in self.metrics:
            if m not in KNOWN_METRICS and not (m.startswith("external:") and m[9:] in scorers):
                raise ConfigError(f"unknown metric {m!r}")
        if "api_key" in json.dumps(dataclasses.asdict(self.judge)):
            raise ConfigError("credentials belong in the environment, not the config")

    def snapshot(self) -> dict:
        snap = dataclasses.asdict(self)
        snap["external_scorers"] = {k: list(v) for k, v in sorted(self.external_scorers.items())}
        return snap


def config_from_mapping(data: Mapping[str, Any]) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    data = dict(data)
    judge = data.pop("judge", None) or {}
    if not isinstance(judge, Mapping):
        raise ConfigError("'judge' must be a mapping")
    judge_known = {f.name for f in dataclasses.fields(JudgeSpec)}
    bad = sorted(set(judge) - judge_known)
    if bad:
        raise ConfigError(f"unknown judge key(s): {', '.join(bad)}")
    try:
        return RunConfig(judge=JudgeSpec(**judge), **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: config must be a mapping")
    return config_from_mapping(data)


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    changes: dict[str, Any] = {}
    for name in ("cache_dir", "cache_mode", "parallelism", "out", "dataset"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "strict", False):
        changes["strict"] = True
    if getattr(args, "include_headings", False):
        changes["include_headings"] = True
    if getattr(args, "metrics", None):
        changes["metrics"] = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    judge_changes = {}
    if getattr(args, "judge", None):
        judge_changes["kind"] = args.judge
    if getattr(args, "verdicts", None):
        judge_changes["verdicts"] = tuple(args.verdicts)
    if judge_changes:
        changes["judge"] = dataclasses.replace(config.judge, **judge_changes)
    return dataclasses.replace(config, **changes) if changes else config


# --------------------------------------------------------------------------
# building blocks


def make_gateway(config: RunConfig) -> Gateway:
    return Gateway(
        cache_dir=config.cache_dir,
        endpoint=config.endpoint,
        api_key_env=config.api_key_env,
        max_retries=config.max_retries,
        timeout=config.timeout,
        parallelism=config.parallelism,
        rate_limit_per_minute=config.rate_limit_per_minute,
    )


def load_exemplars(path: str | Path) -> tuple[list, list[str]]:
    """Read ``{"id", "input": {...}, "output": {...}}`` lines."""
    exemplars, ids = [], []
    for lineno, obj in read_jsonl(path):
        try:
            exemplars.append((dict(obj["input"]), dict(obj["output"])))
        except (KeyError, TypeError, ValueError):
            raise DataError(f"{path}:{lineno}: exemplar needs 'input' and 'output' mappings") from None
        ids.append(str(obj.get("id", f"{Path(path).name}:{lineno}")))
    return exemplars, ids


def _entailment_config(spec: JudgeSpec, task: Task, shots: int, exemplars=(), ids=()) -> PromptConfig:
    exemplars, ids = list(exemplars), list(ids)
    if shots and not exemplars:
        if spec.exemplars:
            exemplars, ids = load_exemplars(spec.exemplars)
        elif task is Task.ENTAILMENT_2WAY and shots == 1:
            exemplars, ids = [ANLI_EXEMPLAR], ["builtin:anli"]
    return PromptConfig(style=PromptStyle(spec.style), shots=shots, task=task, model_name=spec.model_name,
                        temperature=spec.temperature, exemplars=exemplars, exemplar_ids=ids)


def build_judge(config: RunConfig, gateway: Gateway | None = None, task: Task = Task.ENTAILMENT_2WAY,
                prompt: PromptConfig | None = None) -> tuple[Judge, Gateway | None]:
    spec = config.judge
    if spec.kind == "lexical_oracle":
        return LexicalOracleJudge(), gateway
    if spec.kind == "recorded":
        return RecordedJudge.load(*spec.verdicts), gateway
    gateway = gateway or make_gateway(config)
    prompt = prompt or _entailment_config(spec, task, spec.shots)
    judge = LLMJudge(gateway, prompt, config.cache_mode, strict=config.strict)
    return judge, gateway


def write_metadata(config: RunConfig, out: Path, command: str, judge: Judge | None,
                   gateway: Gateway | None, extra: Mapping[str, Any] | None = None) -> None:
    meta = {
        "toolkit": "claimeval",
        "version": __version__,
        "command": command,
        "run_id": config.run_id,
        "config": config.snapshot(),
        "judge_id": judge.id if judge is not None else None,
        "exemplar_ids": list(judge.exemplar_ids) if judge is not None else [],
        "cache_digests": sorted(gateway.used_digests) if gateway is not None else [],
    }
    meta.update(extra or {})
    atomic_write_text(out / "run_metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_claims_file(path: Path, rows: Sequence[tuple[str, Sequence[Claim], bool]]) -> None:
    lines = [dumps_line({"id": iid, "claims": [c.text for c in claims], "fallback": fb})
             for iid, claims, fb in rows]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_claims_file(path: str | Path, source: ClaimSource) -> dict[str, list[Claim]]:
    out = {}
    for lineno, obj in read_jsonl(path):
        try:
            out[str(obj["id"])] = make_claims(obj["claims"], source)
        except (KeyError, TypeError):
            raise DataError(f"{path}:{lineno}: claims record needs 'id' and 'claims'") from None
    return out


def claim_passage(instance: EvaluationInstance, side: ClaimSource) -> str:
    """Passage decomposed for a side; output markers are removed first."""
    if side is ClaimSource.REFERENCE:
        return instance.reference_text
    return strip_citations(instance.output_text)


def _claims_for(instances, judge: Judge, side: ClaimSource, preloaded: Mapping[str, list[Claim]],
                strict: bool, failures: list) -> dict[str, tuple[list[Claim], bool]]:
    def one(inst: EvaluationInstance):
        if inst.id in preloaded:
            return preloaded[inst.id], False
        try:
            result = extract_claims(judge, claim_passage(inst, side), side)
        except JudgmentError as exc:
            if strict:
                raise
            failures.append({"instance_id": inst.id, "stage": f"{side.value}_claims", "error": str(exc)})
            logger.warning("%s: %s claim extraction failed: %s", inst.id, side.value, exc)
            return None
        return list(result.claims), result.fallback

    results = judge.map(one, instances)
    return {inst.id: r for inst, r in zip(instances, results) if r is not None}


# --------------------------------------------------------------------------
# commands


def cmd_evaluate(config: RunConfig, gateway: Gateway | None = None) -> int:
    """Score every instance and write per-instance and aggregate reports."""
    if not config.dataset:
        raise ConfigError("evaluate needs a dataset")
    instances = load_dataset(config.dataset)
    if not instances:
        raise DataError(f"{config.dataset}: empty dataset")
    out = Path(config.out)
    wanted = config.metrics
    needs_judge = any(m in FACTUALITY_METRICS for m in wanted)
    judge, gateway = build_judge(config, gateway) if needs_judge else (None, gateway)
    failures: list[dict] = []

    claims: dict[ClaimSource, dict] = {}
    for metric, side, path in ((CLAIM_RECALL, ClaimSource.REFERENCE, config.reference_claims),
                               (CLAIM_PRECISION, ClaimSource.OUTPUT, config.output_claims)):
        if metric not in wanted:
            continue
        preloaded = load_claims_file(path, side) if path else {}
        claims[side] = _claims_for(instances, judge, side, preloaded, config.strict, failures)
        write_claims_file(out / f"claims_{side.value}.jsonl",
                          [(i.id, *claims[side][i.id]) for i in instances if i.id in claims[side]])

    def score(inst: EvaluationInstance) -> list[MetricReport]:
        reports: list[MetricReport] = []

        def guarded(stage: str, fn):
            try:
                return fn()
            except JudgmentError as exc:
                if config.strict:
                    raise
                failures.append({"instance_id": inst.id, "stage": stage, "error": str(exc)})
                logger.warning("%s: %s failed: %s", inst.id, stage, exc)
                return None

        if CLAIM_RECALL in wanted and inst.id in claims[ClaimSource.REFERENCE]:
            r = guarded(CLAIM_RECALL, lambda: claim_recall(inst, claims[ClaimSource.REFERENCE][inst.id][0], judge))
            reports += [r] if r else []
        if CLAIM_PRECISION in wanted and inst.id in claims[ClaimSource.OUTPUT]:
            r = guarded(CLAIM_PRECISION,
                        lambda: claim_precision(inst, claims[ClaimSource.OUTPUT][inst.id][0], judge))
            reports += [r] if r else []
        if CITATION_RECALL in wanted or CITATION_PRECISION in wanted:
            pair = guarded("citation", lambda: citation_metrics(inst, judge, config.include_headings))
            if pair:
                reports += [r for r in pair if r.metric_name in wanted]
        clean_output = strip_citations(inst.output_text)
        for m in ("rouge_1", "rouge_2", "rouge_l"):
            if m in wanted:
                reports += rouge_reports(inst.id, clean_output, inst.reference_text, m.split("_")[1])
        return reports

    runner = judge.map if judge is not None else (lambda fn, xs: [fn(x) for x in xs])
    per_instance = [r for batch in runner(score, instances) for r in batch]

    for m in wanted:
        if m.startswith("external:"):
            name = m[9:]
            ext = run_external_scorer(config.external_scorers[name], instances)
            by_id = {}
            for r in ext:
                by_id.setdefault(r.instance_id, []).append(
                    dataclasses.replace(r, metric_name=f"{name}:{r.metric_name}"))
            per_instance += [r for i in instances for r in by_id.get(i.id, [])]
    order = {i.id: n for n, i in enumerate(instances)}
    per_instance.sort(key=lambda r: order[r.instance_id])  # stable: metric order kept within an instance

    if not per_instance:
        raise JudgmentError("no instance could be scored")
    agg = aggregate(per_instance)
    if "bleu" in wanted:
        agg.append(MetricReport(CORPUS_ID, "bleu", score=bleu(
            [strip_citations(i.output_text) for i in instances], [i.reference_text for i in instances])))
    n_warnings = sum(len(r.warnings) for r in per_instance)

    write_report(per_instance, out / "reports.json")
    write_report(per_instance, out / "reports.csv", format="csv")
    write_report(agg, out / "aggregate.json")
    write_report(agg, out / "aggregate.csv", format="csv")
    write_metadata(config, out, "evaluate", judge, gateway, {
        "n_instances": len(instances),
        "failures": sorted(failures, key=lambda f: (order.get(f["instance_id"], -1), f["stage"])),
        "n_report_warnings": n_warnings,
    })
    for r in agg:
        print(f"{r.metric_name:<24}{r.formatted:>8}")
    if failures:
        logger.warning("%d soft failure(s); see run_metadata.json", len(failures))
    return EXIT_OK


def cmd_claims(config: RunConfig, side: ClaimSource | str, gateway: Gateway | None = None) -> int:
    """Extract claims for one side of every instance into ``claims_<side>.jsonl``."""
    side = ClaimSource(side)
    if not config.dataset:
        raise ConfigError("claims needs a dataset")
    instances = load_dataset(config.dataset)
    judge, gateway = build_judge(config, gateway)
    failures: list[dict] = []
    got = _claims_for(instances, judge, side, {}, config.strict, failures)
    out = Path(config.out)
    write_claims_file(out / f"claims_{side.value}.jsonl",
                      [(i.id, *got[i.id]) for i in instances if i.id in got])
    write_metadata(config, out, f"claims:{side.value}", judge, gateway, {"failures": failures})
    print(f"wrote claims for {len(got)}/{len(instances)} instances")
    return EXIT_OK


def cmd_nli_bench(config: RunConfig, data: str, mode: BenchMode | str = BenchMode.TWO_WAY,
                  styles: Sequence[str] = (), shots: Sequence[int] = (0,), field_map: str = "default",
                  train: str | None = None, gateway: Gateway | None = None) -> int:
    """Accuracy for every requested (style, shots) cell."""
    mode = BenchMode(mode)
    items = load_nli(data, field_map)
    train_items = load_nli(train, field_map) if train else None
    task = Task.ENTAILMENT_2WAY if mode is BenchMode.TWO_WAY else Task.ENTAILMENT_3WAY
    spec = config.judge
    results, exemplar_log = [], {}
    if spec.kind != "llm":
        cells = [(spec.style, 0)]
    else:
        cells = [(s, k) for s in (styles or [spec.style]) for k in shots]
    judge = None
    for style, k in cells:
        exemplars, ids = ([], [])
        if spec.kind == "llm" and k and train_items is not None:
            exemplars, ids = select_exemplars(train_items, mode, k)
        cell_spec = dataclasses.replace(spec, style=style)
        prompt = _entailment_config(cell_spec, task, k, exemplars, ids) if spec.kind == "llm" else None
        judge, gateway = build_judge(dataclasses.replace(config, judge=cell_spec), gateway, task, prompt)
        label = f"{style}/{k}-shot"
        exemplar_log[label] = list(prompt.exemplar_ids[:k]) if prompt else []
        logger.info("nli-bench %s: exemplars %s", label, exemplar_log[label])
        results.append(run_benchmark(items, judge, mode, config.strict, style, k, exemplar_log[label]))
    out = Path(config.out)
    grid = format_grid(results)
    write_report([r.to_report(f"{r.style}/{r.shots}-shot") for r in results], out / "nli_reports.json")
    detail = [{
        "style": r.style, "shots": r.shots, "mode": r.mode.value, "n_items": r.n_items,
        "n_correct": r.n_correct, "accuracy": r.accuracy, "exemplar_ids": list(r.exemplar_ids),
        "per_item": [dataclasses.asdict(o) for o in r.per_item],
    } for r in results]
    atomic_write_text(out / "nli_results.json", json.dumps(detail, indent=2) + "\n")
    atomic_write_text(out / "nli_summary.txt", grid + "\n")
    write_metadata(config, out, f"nli-bench:{mode.value}", judge, gateway, {"exemplars_by_cell": exemplar_log})
    print(grid)
    return EXIT_OK


def _recall_precision_groups(names: Sequence[str]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {"recall": [], "precision": []}
    for n in names:
        if n.endswith("recall"):
            groups["recall"].append(n)
        elif n.endswith("precision"):
            groups["precision"].append(n)
    return groups


def cmd_correlate(config: RunConfig, report_paths: Sequence[str], stats: Sequence[str] = ("kendall",),
                  groups: Mapping[str, Sequence[str]] | None = None) -> int:
    """Metric-by-metric correlation matrices, one per metric group."""
    if not report_paths:
        raise ConfigError("correlate needs at least one report file")
    per_file = [score_vectors(read_reports(p), skip_ids=(AGGREGATE_ID, CORPUS_ID)) for p in report_paths]
    counts: dict[str, int] = {}
    for vectors in per_file:
        for v in vectors:
            counts[v.metric_name] = counts.get(v.metric_name, 0) + 1
    vectors = []
    for i, vs in enumerate(per_file, start=1):
        for v in vs:
            name = v.metric_name if counts[v.metric_name] == 1 else f"r{i}:{v.metric_name}"
            vectors.append(dataclasses.replace(v, metric_name=name))
    by_name = {v.metric_name: v for v in vectors}
    groups = dict(groups) if groups else _recall_precision_groups(list(by_name))
    for g, members in groups.items():
        missing = [m for m in members if m not in by_name]
        if missing:
            raise ConfigError(f"group {g!r} names unknown metric(s): {', '.join(missing)}")
    out = Path(config.out)
    written = 0
    for g, members in groups.items():
        if len(members) < 2:
            logger.warning("group %s has fewer than 2 metrics; skipped", g)
            continue
        for stat in stats:
            m = correlation_matrix([by_name[n] for n in members], Stat(stat))
            m.write(out / f"correlation_{g}_{stat}.csv", out / f"correlation_{g}_{stat}_long.csv")
            print(f"[{g}] {stat}\n{m.to_csv()}")
            written += 1
    if not written:
        raise ConfigError("no metric group has 2 or more metrics to correlate")
    write_metadata(config, out, "correlate", None, None,
                   {"reports": list(report_paths), "groups": {k: list(v) for k, v in groups.items()}})
    return EXIT_OK


def load_pairs(path: str | Path, reports: Sequence[MetricReport]) -> list[PreferencePair]:
    """Pairs file lines: ``{pair_id, instance_a, instance_b, group?}``; scores come from reports."""
    scores: dict[str, dict[str, float]] = {}
    for r in reports:
        if r.instance_id not in (AGGREGATE_ID, CORPUS_ID):
            scores.setdefault(r.instance_id, {})[r.metric_name] = r.value
    pairs = []
    for lineno, obj in read_jsonl(path):
        try:
            a, b = str(obj["instance_a"]), str(obj["instance_b"])
            pair_id = str(obj["pair_id"])
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        for iid in (a, b):
            if iid not in scores:
                raise DataError(f"{path}:{lineno}: no report rows for instance {iid!r}")
        pairs.append(PreferencePair(pair_id, str(obj.get("instance", a)), scores[a], scores[b],
                                    str(obj.get("group", ""))))
    if not pairs:
        raise DataError(f"{path}: no pairs")
    return pairs


def cmd_agree(config: RunConfig, annotations_path: str, pairs_path: str, report_paths: Sequence[str],
              metrics: Sequence[str] = (), tie_policy: str | None = None) -> int:
    """Agreement with majority human preference and correlation with mean human scores."""
    reports = [r for p in report_paths for r in read_reports(p)]
    pairs = load_pairs(pairs_path, reports)
    annotations = load_annotations(annotations_path)
    common = set(pairs[0].scores_a)
    for p in pairs:
        common &= set(p.scores_a) & set(p.scores_b)
    metrics = list(metrics) or sorted(common)
    unknown = [m for m in metrics if m not in common]
    if unknown:
        raise ConfigError(f"metric(s) not scored on every pair: {', '.join(unknown)}")
    summary, rows = {}, []
    for m in metrics:
        res = human_agreement(pairs, annotations, m, tie_policy)
        try:
            rho, tau = human_metric_correlation(pairs, annotations, m)
        except UndefinedCorrelation as exc:
            logger.warning("%s: correlation with humans undefined (%s)", m, exc)
            rho = tau = None
        by_group = {}
        if any(p.group for p in pairs):
            for g in sorted({p.group for p in pairs}):
                try:
                    by_group[g] = list(human_metric_correlation([p for p in pairs if p.group == g],
                                                                annotations, m))
                except (UndefinedCorrelation, ValueError) as exc:
                    logger.warning("%s/%s: correlation undefined (%s)", m, g, exc)
                    by_group[g] = None
        summary[m] = {
            "agreement": res.fraction, "n_agree": res.n_agree, "n_compared": res.n_compared,
            "metric_ties": list(res.metric_ties), "human_ties": list(res.human_ties),
            "spearman_rho": rho, "kendall_tau_b": tau, "by_group": by_group,
        }
        rows += [{"metric": m, **dataclasses.asdict(x)} for x in res.per_pair]
        shown = res.fraction if res.fraction is not None else "n/a (all pairs tied)"
        print(f"{m:<24}{shown:>22}  ties={len(res.metric_ties)}")
    out = Path(config.out)
    atomic_write_text(out / "agreement_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    atomic_write_text(out / "agreement_pairs.jsonl", "".join(dumps_line(r) + "\n" for r in rows))
    write_metadata(config, out, "agree", None, None, {"tie_policy": tie_policy})
    return EXIT_OK


def cmd_generate(config: RunConfig, shots: int = 0, exemplars_path: str | None = None,
                 instruction: str | None = None, gateway: Gateway | None = None) -> int:
    """Ask the model for cited outputs and write a dataset ``cmd_evaluate`` can read."""
    if not config.dataset:
        raise ConfigError("generate needs a dataset")
    instances = load_dataset(config.dataset)
    exemplars, ids = load_exemplars(exemplars_path) if exemplars_path else ([], [])
    spec = config.judge
    prompt = PromptConfig(style=PromptStyle(spec.style), shots=shots, task=Task.GENERATION,
                          model_name=spec.model_name, temperature=spec.temperature,
                          exemplars=exemplars, exemplar_ids=ids)
    gateway = gateway or make_gateway(config)
    mode = CacheMode(config.cache_mode)

    def one(inst: EvaluationInstance) -> str:
        payload = {"input_units": inst.input_units}
        if instruction:
            payload["instruction"] = instruction
        return gateway.complete(render_prompt(prompt, payload), prompt, mode).strip()

    outputs = gateway.map(one, instances)
    flags, rows = [], []
    for inst, text in zip(instances, outputs):
        sentences = [s for s in cite_sentences(text) if not s.is_heading]
        problems = []
        uncited = sum(1 for s in sentences if not s.citations)
        if uncited:
            problems.append(f"{uncited} sentence(s) without citation")
        bad = out_of_range_citations(sentences, len(inst.input_units))
        if bad:
            problems.append(f"out-of-range citation(s) {bad}")
        if problems:
            flags.append({"instance_id": inst.id, "problems": problems})
            logger.warning("%s: %s", inst.id, "; ".join(problems))
        rows.append(instance_to_record(dataclasses.replace(inst, output_text=text)))
    out = Path(config.out)
    atomic_write_text(out / "generated.jsonl", "".join(dumps_line(r) + "\n" for r in rows))
    write_metadata(config, out, "generate", None, gateway,
                   {"exemplar_ids": ids[:shots], "model_name": spec.model_name, "flags": flags})
    print(f"generated {len(rows)} outputs ({len(flags)} flagged)")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--cache-mode", dest="cache_mode", choices=[m.value for m in CacheMode])
    common.add_argument("--parallelism", type=int)
    common.add_argument("--strict", action="store_true", help="fail on the first unparseable judgment")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    def judge_flags(p):
        p.add_argument("--judge", choices=["llm", "lexical_oracle", "recorded"])
        p.add_argument("--verdicts", nargs="+", help="verdict tables for --judge recorded")

    parser = argparse.ArgumentParser(prog="claimeval", description="Claim- and citation-level factuality evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="score a dataset")
    p.add_argument("--dataset")
    p.add_argument("--metrics", help="comma-separated metric names")
    p.add_argument("--include-headings", dest="include_headings", action="store_true")
    judge_flags(p)

    p = sub.add_parser("claims", parents=[common], help="extract claims to a file")
    p.add_argument("--dataset")
    p.add_argument("--side", choices=[s.value for s in ClaimSource], default=ClaimSource.REFERENCE.value)
    judge_flags(p)

    p = sub.add_parser("nli-bench", parents=[common], help="NLI accuracy benchmark")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=[m.value for m in BenchMode], default=BenchMode.TWO_WAY.value)
    p.add_argument("--styles", help="comma-separated prompt styles (nl,json,json_cot)")
    p.add_argument("--shots", type=_int_list, default=[0], help="comma-separated shot counts")
    p.add_argument("--field-map", dest="field_map", default="default", help="default, anli or mednli")
    p.add_argument("--train", help="training split to draw exemplars from")
    judge_flags(p)

    p = sub.add_parser("correlate", parents=[common], help="correlation matrices between metrics")
    p.add_argument("reports", nargs="+")
    p.add_argument("--stat", action="append", choices=[s.value for s in Stat])
    p.add_argument("--groups", help="YAML mapping of group name to metric names")

    p = sub.add_parser("agree", parents=[common], help="agreement with human preferences")
    p.add_argument("--annotations", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("reports", nargs="+")
    p.add_argument("--metric", action="append", dest="agree_metrics")
    p.add_argument("--tie-policy", dest="tie_policy", choices=[t.value for t in TiePolicy])

    p = sub.add_parser("generate", parents=[common], help="generate cited outputs")
    p.add_argument("--dataset")
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--exemplars")
    p.add_argument("--instruction")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if args.command == "evaluate":
        return cmd_evaluate(config)
    if args.command == "claims":
        return cmd_claims(config, args.side)
    if args.command == "nli-bench":
        styles = [s.strip() for s in args.styles.split(",")] if args.styles else ()
        for s in styles:
            PromptStyle(s)
        return cmd_nli_bench(config, args.data, args.mode, styles, args.shots, args.field_map, args.train)
    if args.command == "correlate":
        groups = None
        if args.groups:
            try:
                groups = yaml.safe_load(Path(args.groups).read_text(encoding="utf-8"))
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError(f"cannot read groups file: {exc}") from None
            if not isinstance(groups, Mapping):
                raise ConfigError("groups file must map group names to metric lists")
        return cmd_correlate(config, args.reports, args.stat or ["kendall"], groups)
    if args.command == "agree":
        return cmd_agree(config, args.annotations, args.pairs, args.reports, args.agree_metrics or (),
                         args.tie_policy)
    if args.command == "generate":
        return cmd_generate(config, args.shots, args.exemplars, args.instruction)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _dispatch(args)
    except (JudgmentError, GatewayError, ExternalScorerError) as exc:
        logger.error("%s", exc)
        return EXIT_JUDGMENT
    except (ConfigError, DataError, PromptError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
