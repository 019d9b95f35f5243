"""Command-line entry point: ``audioplan {ingest,query,genbench,eval}``.

Exit codes: 0 success, 2 bad input, 3 pipeline stage failure, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .compiler import compile_plan, emit_sql
from .config import ConfigError, RunConfig, load_config
from .evaluate import decompose_errors, evaluate, write_traces
from .gateway import (
    ChatClient,
    ExtractiveGenerator,
    QueryRequest,
    RemoteLLMGenerator,
    RemoteLLMPlanner,
    RuleTemplatePlanner,
    StageError,
    run_pipeline,
)
from .ingest import IngestError, build_database, generate_benchmark, load_database, load_manifest, read_instances, save_database
from .ingest.synth import BenchmarkError
from .plan import canonicalize
from .store import RecordingDatabase
from .templates import TASKS

EXIT_OK, EXIT_INPUT, EXIT_STAGE, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("audioplan")


class InputError(Exception):
    pass


def _backends(cfg: RunConfig):
    if cfg.backend == "rule":
        return RuleTemplatePlanner(cfg.tau), ExtractiveGenerator(), None
    client = ChatClient(cfg.remote)
    return RemoteLLMPlanner(client), RemoteLLMGenerator(client), client


def _config(args: argparse.Namespace, **flags: Any) -> RunConfig:
    flags.setdefault("backend", getattr(args, "backend", None))
    flags.setdefault("tau", getattr(args, "tau", None))
    flags.setdefault("seed", getattr(args, "seed", None))
    flags.setdefault("jobs", getattr(args, "jobs", None))
    if getattr(args, "trace", False):
        flags["trace"] = True
    return load_config(getattr(args, "config", None), flags)


def _load_db(root: Path, recording_id: str) -> RecordingDatabase:
    for candidate in (root / recording_id, root):
        if (candidate / "meta.json").exists():
            db = load_database(candidate)
            if db.recording_id == recording_id:
                return db
    raise InputError(f"recording {recording_id!r} not found under {root}")


# --- subcommands --------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    out = Path(args.out)
    for entry in load_manifest(args.manifest):
        db = build_database(entry)
        path = save_database(db, out / entry.recording_id)
        counts = ", ".join(f"{k.value}={len(v)}" for k, v in db.streams.items())
        print(f"{entry.recording_id}\t{path}\t{counts}")
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _config(args)
    db = _load_db(Path(args.db), args.recording)
    planner, generator, client = _backends(cfg)
    request = QueryRequest.for_db(args.question, db)
    try:
        if args.emit_sql_only:
            try:
                plan = canonicalize(planner.plan(request))
            except Exception as exc:
                print(f"[plan] {type(exc).__name__}: {exc}", file=sys.stderr)
                return EXIT_STAGE
            sys.stdout.write(emit_sql(compile_plan(plan)))
            return EXIT_OK
        try:
            run = run_pipeline(request, db, planner, generator)
        except StageError as exc:
            print(str(exc), file=sys.stderr)
            if args.trace:
                print(json.dumps(exc.trace.to_dict(), indent=2), file=sys.stderr)
            return EXIT_STAGE
    finally:
        if client is not None:
            client.close()
    t = run.trace
    print("== plan")
    print(json.dumps(t.plan, indent=2))
    print("== sql")
    print(t.sql)
    print(f"== rows: {t.row_count}")
    print(f"== context tokens: {t.context_size}")
    if args.trace:
        print("== context")
        print(run.context.context_text)
    print("== answer")
    print(run.answer.raw)
    if not run.answer.ok:
        print(f"[generate] parse failure: {run.answer.parse_failure}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


def cmd_genbench(args: argparse.Namespace) -> int:
    tasks = TASKS if args.tasks in (None, "all") else tuple(t.strip() for t in args.tasks.split(",") if t.strip())
    entries, instances = generate_benchmark(args.duration, tasks, args.seed, args.out, args.recordings)
    print(f"wrote {len(entries)} recordings and {len(instances)} instances to {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if not 0.0 <= args.inject_parse_failures <= 1.0:
        raise InputError("--inject-parse-failures must be in [0, 1]")
    instances = read_instances(args.instances)
    toplines = None
    if args.toplines:
        try:
            toplines = {str(k): float(v) for k, v in json.loads(Path(args.toplines).read_text()).items()}
        except (OSError, ValueError, AttributeError) as exc:
            raise InputError(f"bad toplines file {args.toplines}: {exc}") from None
    root = Path(args.db)
    cache: dict[str, RecordingDatabase | None] = {}

    def lookup(rid: str) -> RecordingDatabase | None:
        if rid not in cache:
            try:
                cache[rid] = _load_db(root, rid)
            except (InputError, IngestError):
                cache[rid] = None
        return cache[rid]

    for rid in sorted({i.recording_id for i in instances}):
        lookup(rid)
    planner, generator, client = _backends(cfg)
    try:
        runs = evaluate(instances, lookup, planner, generator, cfg.jobs, args.inject_parse_failures, cfg.seed)
    finally:
        if client is not None:
            client.close()
    report = decompose_errors(runs, toplines)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    write_traces(runs, out / "traces.jsonl")
    sys.stdout.write(report.to_table())
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="audioplan", description="Plan-driven retrieval over long-audio metadata.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def backend_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--backend", choices=("rule", "remote"))
        sp.add_argument("--tau", type=float, help="fusion tolerance in seconds")
        sp.add_argument("--trace", action="store_true")

    sp = sub.add_parser("ingest", help="build per-recording databases from a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("query", help="answer one question against one recording")
    sp.add_argument("question")
    sp.add_argument("--db", required=True, help="database directory or ingest output root")
    sp.add_argument("--recording", required=True)
    sp.add_argument("--emit-sql-only", action="store_true")
    backend_opts(sp)
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("genbench", help="write a synthetic benchmark")
    sp.add_argument("--duration", type=int, required=True, help="minutes per recording (multiple of 10)")
    sp.add_argument("--tasks", default="all", help=f"comma list from {','.join(TASKS)}")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--recordings", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_genbench)

    sp = sub.add_parser("eval", help="run and score a benchmark")
    sp.add_argument("--instances", required=True)
    sp.add_argument("--db", required=True, help="ingest output root")
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--inject-parse-failures", type=float, default=0.0, metavar="RATE")
    sp.add_argument("--toplines", help="JSON object of task -> topline metric")
    backend_opts(sp)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, IngestError, BenchmarkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
