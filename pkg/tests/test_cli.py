from __future__ import annotations

import json
from pathlib import Path

import pytest

from audioplan.cli import main
from audioplan.config import ConfigError, load_config


@pytest.fixture(scope="module")
def ingested(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["genbench", "--duration", "30", "--tasks", "speaker_count,sed", "--seed", "7", "--out", str(root / "bench")]) == 0
    assert main(["ingest", str(root / "bench" / "manifest.json"), "--out", str(root / "db")]) == 0
    return root


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_ingest_one_dir_per_recording_and_deterministic(ingested, tmp_path):
    assert [p.name for p in (ingested / "db").iterdir()] == ["syn030m-7-000"]
    assert main(["ingest", str(ingested / "bench" / "manifest.json"), "--out", str(tmp_path / "db")]) == 0
    assert _tree(tmp_path / "db") == _tree(ingested / "db")


def test_ingest_missing_rttm(ingested, tmp_path, capsys):
    manifest = json.loads((ingested / "bench" / "manifest.json").read_text())
    manifest["recordings"][0]["diarization"] = "missing.rttm"
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    assert main(["ingest", str(tmp_path / "m.json"), "--out", str(tmp_path / "db")]) == 2
    assert "missing.rttm" in capsys.readouterr().err


def test_genbench_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["genbench", "--duration", "30", "--tasks", "sed", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


Q = "You should count the number of speakers starting from 0 sec to 600 sec."


def test_query_prints_integer(ingested, capsys):
    assert main(["query", Q, "--db", str(ingested / "db"), "--recording", "syn030m-7-000"]) == 0
    out = capsys.readouterr().out
    assert "== sql" in out and "== rows:" in out and "== context tokens:" in out
    answer = json.loads(out.split("== answer\n")[1])
    assert isinstance(answer["answer"], int) and answer["answer"] >= 2


def test_emit_sql_only(ingested, capsys):
    assert main(["query", Q, "--db", str(ingested / "db"), "--recording", "syn030m-7-000", "--emit-sql-only"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("WITH\nsp AS (") and "== answer" not in out


def test_unknown_recording(ingested, capsys):
    assert main(["query", Q, "--db", str(ingested / "db"), "--recording", "nope"]) == 2
    assert "nope" in capsys.readouterr().err


def test_bad_tau_is_config_error(ingested):
    assert main(["query", Q, "--db", str(ingested / "db"), "--recording", "syn030m-7-000", "--tau", "-1"]) == 4


def test_eval_rule_backend(ingested, tmp_path):
    out = tmp_path / "out"
    args = ["eval", "--instances", str(ingested / "bench" / "instances.jsonl"), "--db", str(ingested / "db"), "--out", str(out)]
    assert main(args) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["tasks"]["speaker_count"]["end_to_end"] == 100.0
    assert (out / "report.txt").exists()
    n = len((ingested / "bench" / "instances.jsonl").read_text().splitlines())
    assert len((out / "traces.jsonl").read_text().splitlines()) == n


def test_eval_unreachable_remote_still_reports(ingested, tmp_path, monkeypatch):
    monkeypatch.setenv("AUDIOPLAN_ENDPOINT", "http://127.0.0.1:9/v1")
    monkeypatch.setenv("AUDIOPLAN_RETRIES", "1")
    out = tmp_path / "out"
    args = ["eval", "--backend", "remote", "--instances", str(ingested / "bench" / "instances.jsonl"),
            "--db", str(ingested / "db"), "--out", str(out)]
    assert main(args) == 0
    runs = [json.loads(l) for l in (out / "traces.jsonl").read_text().splitlines()]
    assert runs and all(r["failed_stage"] == "plan" for r in runs)
    assert all("PlannerUnavailable" in r["trace"]["error"] for r in runs)
    assert json.loads((out / "report.json").read_text())["tasks"]["speaker_count"]["end_to_end"] == 0.0


# --- config precedence ---------------------------------------------------------------


def test_precedence_file_flags_env(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"tau": 1.0, "seed": 3, "backend": "remote", "remote": {"model": "m1", "retries": 5}}))
    cfg = load_config(cfg_file, {"tau": 2.0}, {"AUDIOPLAN_TAU": "4.0", "AUDIOPLAN_MODEL": "m2"})
    assert cfg.tau == 4.0 and cfg.seed == 3 and cfg.backend == "remote"
    assert cfg.remote.model == "m2" and cfg.remote.retries == 5
    assert load_config(cfg_file, {"tau": 2.0}, {}).tau == 2.0


@pytest.mark.parametrize("env", [{"AUDIOPLAN_BACKEND": "magic"}, {"AUDIOPLAN_TAU": "0"}, {"AUDIOPLAN_WHAT": "1"}])
def test_config_errors(env):
    with pytest.raises(ConfigError):
        load_config(None, {}, env)
