from __future__ import annotations

import json

import pytest

from audioplan.answers import Answer
from audioplan.evaluate import RunResult, decompose_errors, evaluate, write_traces
from audioplan.gateway import ExtractiveGenerator, RuleTemplatePlanner
from audioplan.gateway.pipeline import Trace
from audioplan.ingest import build_database, generate_benchmark, load_manifest
from audioplan.ingest.synth import TaskInstance


def _inst(i: int, truth="A") -> TaskInstance:
    return TaskInstance(f"x/mcqa/{i:04d}", "mcqa", "x", "q", truth)


def _run(i: int, parsed=None, parse_failure=None, stage=None) -> RunResult:
    trace = Trace("x", "q", failed_stage=stage)
    if stage is not None:
        return RunResult(_inst(i), 10.0, None, trace, stage)
    return RunResult(_inst(i), 10.0, Answer("raw", parsed, parse_failure), trace)


def test_parseable_versus_end_to_end():
    runs = [_run(i, "A") for i in range(6)]
    runs += [_run(6, "B"), _run(7, "C")]
    runs += [_run(8, None, "bad"), _run(9, None, "bad")]
    fig = decompose_errors(runs).tasks["mcqa"].overall
    assert fig.parseable == pytest.approx(75.0)
    assert fig.end_to_end == pytest.approx(60.0)
    assert fig.counts.parse_failures == 2 and fig.counts.parsed == 8


def test_no_failures_same_figures():
    fig = decompose_errors([_run(i, "A" if i % 3 else "B") for i in range(9)]).tasks["mcqa"].overall
    assert fig.parseable == fig.end_to_end


def test_all_plan_failures():
    fig = decompose_errors([_run(i, stage="plan") for i in range(4)]).tasks["mcqa"].overall
    assert fig.end_to_end == 0.0
    assert fig.counts.stage_failures == {"plan": 4}
    assert fig.parseable != fig.parseable  # nothing parseable -> NaN


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    _, instances = generate_benchmark(30, ["speaker_count", "mcqa", "diarization"], 4, root, recordings=2)
    dbs = {e.recording_id: build_database(e) for e in load_manifest(root / "manifest.json")}
    return instances, dbs


def test_oracle_corpus_end_to_end(corpus, tmp_path):
    instances, dbs = corpus
    runs = evaluate(instances, dbs, RuleTemplatePlanner(), ExtractiveGenerator(), jobs=4)
    assert [r.instance.instance_id for r in runs] == sorted(i.instance_id for i in instances)
    report = decompose_errors(runs)
    assert report.tasks["speaker_count"].overall.end_to_end == 100.0
    assert report.tasks["mcqa"].overall.end_to_end == 100.0
    assert report.tasks["diarization"].overall.end_to_end == 0.0
    doc = json.loads(report.to_json())
    assert doc["tasks"]["speaker_count"]["normalized"] == 100.0
    assert "speaker_count" in report.to_table()
    write_traces(runs, tmp_path / "t.jsonl")
    first = json.loads((tmp_path / "t.jsonl").read_text().splitlines()[0])
    assert first["trace"]["sql"].startswith("WITH")


def test_injected_parse_failures_exact_count(corpus):
    instances, dbs = corpus
    runs = evaluate(instances, dbs, RuleTemplatePlanner(), ExtractiveGenerator(), inject_parse_failures=0.2, seed=9)
    for task in ("speaker_count", "mcqa", "diarization"):
        n = sum(1 for i in instances if i.task == task)
        assert sum(r.parse_failed for r in runs if r.instance.task == task) == round(0.2 * n)
    again = evaluate(instances, dbs, RuleTemplatePlanner(), ExtractiveGenerator(), inject_parse_failures=0.2, seed=9)
    assert [r.parse_failed for r in runs] == [r.parse_failed for r in again]


def test_missing_recording_is_plan_failure(corpus):
    instances, _ = corpus
    runs = evaluate(instances[:3], {}, RuleTemplatePlanner(), ExtractiveGenerator())
    assert all(r.failed_stage == "plan" for r in runs)
