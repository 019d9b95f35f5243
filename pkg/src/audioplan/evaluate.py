"""Benchmark evaluation: pipeline fan-out, per-task scoring, error decomposition.

Every run ends in one of three states: parsed answer, parse failure, or a
failure tagged with the pipeline stage that raised. End-to-end figures score
the last two as an empty hypothesis; parseable figures drop them.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .answers import Answer
from .gateway import QueryRequest, StageError, run_pipeline
from .gateway.base import Generator, Planner
from .gateway.pipeline import STAGES, Trace
from .ingest.synth import EMOTIONS, TaskInstance
from .metrics import (
    MatchCounts,
    clip_segments,
    der_breakdown,
    event_matches,
    macro_f1,
    normalize_score,
    rouge_l,
    spearman_rho,
)
from .plan import ABSTAIN_REPLY
from .store import RecordingDatabase

METRIC_NAMES = {
    "qa1": "rouge_l",
    "mcqa": "accuracy",
    "summarization": "rouge_l",
    "diarization": "der",
    "emotion": "macro_f1",
    "sed": "event_f1",
    "speaker_count": "accuracy",
    "event_ordering": "spearman_rho",
    "speaker_constrained_qa": "accuracy",
}
ERROR_BASED = {"diarization"}
ACCURACY_TASKS = {"mcqa", "speaker_count", "speaker_constrained_qa"}
# Toplines for perfect perception metadata; override with measured values.
DEFAULT_TOPLINES = {task: (0.0 if task in ERROR_BASED else 100.0) for task in METRIC_NAMES}

FAILED = object()


@dataclass
class RunResult:
    instance: TaskInstance
    duration_min: float | None
    answer: Answer | None
    trace: Trace
    failed_stage: str | None = None

    @property
    def parsed(self) -> Any:
        if self.answer is None or not self.answer.ok:
            return FAILED
        return self.answer.parsed

    @property
    def parse_failed(self) -> bool:
        return self.failed_stage is None and self.answer is not None and not self.answer.ok

    def to_dict(self) -> dict[str, Any]:
        parsed = self.parsed
        return {
            "instance_id": self.instance.instance_id,
            "task": self.instance.task,
            "recording_id": self.instance.recording_id,
            "duration_min": self.duration_min,
            "failed_stage": self.failed_stage,
            "parsed": None if parsed is FAILED else parsed,
            "ground_truth": self.instance.ground_truth,
            "trace": self.trace.to_dict(),
        }


# --- running ------------------------------------------------------------------------


def run_instance(
    instance: TaskInstance, db: RecordingDatabase | None, planner: Planner, generator: Generator
) -> RunResult:
    duration = db.duration / 60.0 if db is not None else None
    if db is None:
        trace = Trace(instance.recording_id, instance.question, failed_stage="plan", error="recording not found")
        return RunResult(instance, None, None, trace, "plan")
    try:
        run = run_pipeline(QueryRequest.for_db(instance.question, db), db, planner, generator)
    except StageError as exc:
        return RunResult(instance, duration, None, exc.trace, exc.stage)
    return RunResult(instance, duration, run.answer, run.trace)


def evaluate(
    instances: Sequence[TaskInstance],
    databases: Mapping[str, RecordingDatabase] | Callable[[str], RecordingDatabase | None],
    planner: Planner,
    generator: Generator,
    jobs: int = 1,
    inject_parse_failures: float = 0.0,
    seed: int = 0,
) -> list[RunResult]:
    """Run every instance; results come back sorted by instance id.

    ``inject_parse_failures`` replaces the answers of exactly
    ``round(rate * n)`` seeded-random instances of each task with
    unparseable output, so every per-task figure sees the same rate.
    """
    lookup = databases.get if isinstance(databases, Mapping) else databases

    def one(inst: TaskInstance) -> RunResult:
        return run_instance(inst, lookup(inst.recording_id), planner, generator)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, instances))
    else:
        results = [one(i) for i in instances]
    results.sort(key=lambda r: r.instance.instance_id)

    if inject_parse_failures > 0:
        rng = random.Random(seed)
        by_task: dict[str, list[str]] = {}
        for r in results:
            by_task.setdefault(r.instance.task, []).append(r.instance.instance_id)
        chosen: set[str] = set()
        for task in sorted(by_task):
            ids = by_task[task]
            chosen.update(rng.sample(ids, round(inject_parse_failures * len(ids))))
        for r in results:
            if r.instance.instance_id in chosen and r.failed_stage is None:
                r.answer = Answer("<<garbled>>", None, "injected parse failure")
                r.trace.raw_answer = r.answer.raw
                r.trace.parse_failure = r.answer.parse_failure
    return results


# --- scoring ------------------------------------------------------------------------


def _segments(value: Any) -> list[tuple[float, float, str]]:
    return [(float(s), float(e), str(l)) for s, e, l in value]


def task_metric(task: str, pairs: Sequence[tuple[TaskInstance, Any]]) -> float:
    """Metric on a 0-100 scale over ``(instance, parsed or FAILED)`` pairs."""
    if not pairs:
        return float("nan")
    if task in ACCURACY_TASKS:
        return 100.0 * sum(1 for inst, p in pairs if p is not FAILED and p == inst.ground_truth) / len(pairs)
    if task in ("qa1", "summarization"):
        return 100.0 * sum(rouge_l("" if p is FAILED else str(p), str(inst.ground_truth)) for inst, p in pairs) / len(pairs)
    if task == "diarization":
        missed = fa = conf = total = 0.0
        for inst, p in pairs:
            hyp = [] if p is FAILED else _segments(p)
            if inst.window is not None:
                hyp = clip_segments(hyp, inst.window.start, inst.window.end)
            b = der_breakdown(_segments(inst.ground_truth), hyp, allow_empty=True)
            missed, fa, conf, total = missed + b.missed, fa + b.false_alarm, conf + b.confusion, total + b.total
        return 100.0 * (missed + fa + conf) / total if total > 0 else (0.0 if fa == 0 else 100.0)
    if task == "emotion":
        refs = [inst.ground_truth for inst, _ in pairs]
        preds = [None if p is FAILED or not p else p[0] for _, p in pairs]
        labels = list(EMOTIONS)
        for inst, _ in pairs:
            labels.extend(inst.meta.get("label_set", ()))
        labels.extend(refs)
        labels.extend(x for x in preds if x is not None)
        return 100.0 * macro_f1(refs, preds, labels)
    if task == "sed":
        counts = MatchCounts(0, 0, 0)
        for inst, p in pairs:
            ref = [(label, float(onset)) for label, onset, _ in inst.ground_truth]
            hyp = [] if p is FAILED else [(l, s) for s, _, l in _segments(p)]
            counts = counts + event_matches(ref, hyp, tolerance=5.0)
        return 100.0 * counts.f1
    if task == "event_ordering":
        return 100.0 * sum(0.0 if p is FAILED else spearman_rho(inst.ground_truth, list(p)) for inst, p in pairs) / len(pairs)
    raise ValueError(f"unknown task {task!r}")


@dataclass
class Counts:
    total: int = 0
    parsed: int = 0
    parse_failures: int = 0
    stage_failures: dict[str, int] = field(default_factory=dict)


@dataclass
class Figures:
    counts: Counts
    parseable: float
    end_to_end: float
    normalized: float
    extra: dict[str, float] = field(default_factory=dict)


@dataclass
class TaskReport:
    task: str
    metric: str
    error_based: bool
    topline: float
    overall: Figures
    by_duration: dict[str, Figures]

    @property
    def raw(self) -> float:
        return self.overall.end_to_end


@dataclass
class EvalReport:
    tasks: dict[str, TaskReport]

    def to_dict(self) -> dict[str, Any]:
        def fig(f: Figures) -> dict[str, Any]:
            return {
                "counts": {
                    "total": f.counts.total,
                    "parsed": f.counts.parsed,
                    "parse_failures": f.counts.parse_failures,
                    "stage_failures": dict(sorted(f.counts.stage_failures.items())),
                },
                "parseable": _finite(f.parseable),
                "end_to_end": _finite(f.end_to_end),
                "normalized": _finite(f.normalized),
                **({"extra": {k: _finite(v) for k, v in sorted(f.extra.items())}} if f.extra else {}),
            }

        return {
            "tasks": {
                name: {
                    "metric": t.metric,
                    "error_based": t.error_based,
                    "topline": t.topline,
                    "raw": _finite(t.raw),
                    **fig(t.overall),
                    "by_duration": {d: fig(f) for d, f in t.by_duration.items()},
                }
                for name, t in sorted(self.tasks.items())
            }
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        header = f"{'task':<24}{'dur':>6}{'metric':>14}{'topline':>9}{'parseable':>11}{'e2e':>9}{'norm':>8}{'n':>6}{'pfail':>7}{'sfail':>7}"
        lines = [header, "-" * len(header)]
        for name, t in sorted(self.tasks.items()):
            rows = [("all", t.overall)] + list(t.by_duration.items())
            for dur, f in rows:
                lines.append(
                    f"{name:<24}{dur:>6}{t.metric:>14}{t.topline:>9.2f}{_fmt(f.parseable):>11}{_fmt(f.end_to_end):>9}"
                    f"{_fmt(f.normalized):>8}{f.counts.total:>6}{f.counts.parse_failures:>7}{sum(f.counts.stage_failures.values()):>7}"
                )
        return "\n".join(lines) + "\n"


def _finite(x: float) -> float | None:
    return None if x != x else round(x, 6)


def _fmt(x: float) -> str:
    return "-" if x != x else f"{x:.2f}"


def _figures(task: str, runs: Sequence[RunResult], topline: float) -> Figures:
    counts = Counts(total=len(runs))
    stage = Counter(r.failed_stage for r in runs if r.failed_stage)
    counts.stage_failures = {s: stage[s] for s in STAGES if stage[s]}
    counts.parse_failures = sum(1 for r in runs if r.parse_failed)
    counts.parsed = counts.total - counts.parse_failures - sum(stage.values())
    all_pairs = [(r.instance, r.parsed) for r in runs]
    ok_pairs = [(i, p) for i, p in all_pairs if p is not FAILED]
    e2e = task_metric(task, all_pairs)
    parseable = task_metric(task, ok_pairs)
    normalized = normalize_score(e2e, topline, task in ERROR_BASED) if e2e == e2e else float("nan")
    extra: dict[str, float] = {}
    if task == "speaker_constrained_qa":
        unans = [(i, p) for i, p in all_pairs if i.ground_truth == ABSTAIN_REPLY]
        ans = [(i, p) for i, p in all_pairs if i.ground_truth != ABSTAIN_REPLY]
        extra["abstention_accuracy"] = task_metric(task, unans)
        extra["answerable_accuracy"] = task_metric(task, ans)
    return Figures(counts, parseable, e2e, normalized, extra)


def decompose_errors(runs: Iterable[RunResult], toplines: Mapping[str, float] | None = None) -> EvalReport:
    """Per task and per duration: topline, parseable-only and end-to-end figures."""
    tops = dict(DEFAULT_TOPLINES)
    tops.update(toplines or {})
    by_task: dict[str, list[RunResult]] = defaultdict(list)
    for r in runs:
        by_task[r.instance.task].append(r)
    tasks = {}
    for task, task_runs in by_task.items():
        by_dur: dict[str, list[RunResult]] = defaultdict(list)
        for r in task_runs:
            key = "?" if r.duration_min is None else f"{r.duration_min:g}"
            by_dur[key].append(r)
        tasks[task] = TaskReport(
            task,
            METRIC_NAMES[task],
            task in ERROR_BASED,
            tops[task],
            _figures(task, task_runs, tops[task]),
            {d: _figures(task, rs, tops[task]) for d, rs in sorted(by_dur.items(), key=lambda kv: _dur_key(kv[0]))},
        )
    return EvalReport(tasks)


def _dur_key(d: str) -> float:
    try:
        return float(d)
    except ValueError:
        return float("inf")


def write_traces(runs: Iterable[RunResult], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in runs:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
