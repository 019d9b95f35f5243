"""Planner/generator interfaces and shared request types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from ..answers import Answer
from ..executor import RetrievedSegments
from ..plan import AnswerSchema, RetrievalPlan
from ..store import StreamKind, RecordingDatabase


class GatewayError(RuntimeError):
    pass


class PlannerUnavailable(GatewayError):
    pass


class PlanInvalidAfterRetries(GatewayError):
    pass


class GeneratorUnavailable(GatewayError):
    pass


@dataclass(frozen=True)
class DbMetadata:
    streams: tuple[StreamKind, ...]
    duration: float
    speakers: tuple[str, ...] = ()
    event_labels: tuple[str, ...] = ()

    @classmethod
    def of(cls, db: RecordingDatabase) -> DbMetadata:
        present = tuple(k for k, recs in db.streams.items() if recs)
        return cls(present, db.duration, tuple(db.speakers()), tuple(db.event_labels()))


@dataclass(frozen=True)
class QueryRequest:
    question: str
    recording_id: str
    db_metadata: DbMetadata | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.question or not self.question.strip():
            raise ValueError("question must be non-empty")

    @classmethod
    def for_db(cls, question: str, db: RecordingDatabase) -> QueryRequest:
        return cls(question, db.recording_id, DbMetadata.of(db))


class Planner(Protocol):
    def plan(self, request: QueryRequest) -> RetrievalPlan: ...


class Generator(Protocol):
    def generate(self, question: str, context: RetrievedSegments, schema: AnswerSchema) -> Answer: ...
