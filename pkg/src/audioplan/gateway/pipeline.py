"""plan -> canonicalize -> compile -> execute -> generate, with a trace."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

from ..answers import Answer
from ..compiler import compile_plan, emit_sql
from ..executor import execute
from ..plan import canonicalize, plan_to_dict
from ..store import RecordingDatabase
from .base import Generator, Planner, QueryRequest

STAGES = ("plan", "compile", "execute", "generate")


@dataclass
class Trace:
    recording_id: str
    question: str
    plan: dict[str, Any] | None = None
    sql: str | None = None
    row_count: int | None = None
    context_size: int | None = None
    raw_answer: str | None = None
    parse_failure: str | None = None
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, trace: Trace):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace


@dataclass
class PipelineRun:
    answer: Answer
    trace: Trace
    context: Any = field(default=None, repr=False)


def run_pipeline(request: QueryRequest, db: RecordingDatabase, planner: Planner, generator: Generator) -> PipelineRun:
    trace = Trace(request.recording_id, request.question)
    stage = "plan"
    try:
        plan = canonicalize(planner.plan(request))
        trace.plan = plan_to_dict(plan)
        stage = "compile"
        ir = compile_plan(plan)
        trace.sql = emit_sql(ir)
        stage = "execute"
        context = execute(ir, db)
        trace.row_count = len(context.rows)
        trace.context_size = context.context_size
        stage = "generate"
        answer = generator.generate(request.question, context, plan.answer_schema)
    except Exception as exc:
        trace.failed_stage = stage
        trace.error = f"{type(exc).__name__}: {exc}"
        raise StageError(stage, exc, trace) from exc
    trace.raw_answer = answer.raw
    trace.parse_failure = answer.parse_failure
    return PipelineRun(answer, trace, context)
