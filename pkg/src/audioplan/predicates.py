"""Scan predicates evaluated against single records."""

from __future__ import annotations

from dataclasses import dataclass

from .store import LabelScore, Record, StoreError, StreamKind, TimeSpan

_LABELLED = (StreamKind.EMOTION, StreamKind.SOUND_EVENT)


class FilterPredicate:
    """Base class; subclasses implement ``matches`` and declare the kinds they apply to."""

    applies_to: tuple[StreamKind, ...] = tuple(StreamKind)

    def matches(self, record: Record, kind: StreamKind) -> bool:
        raise NotImplementedError

    def check_applicable(self, kind: StreamKind) -> None:
        if kind not in self.applies_to:
            raise StoreError(f"{type(self).__name__} references a field absent from stream {kind.value}")

    @property
    def is_window_only(self) -> bool:
        return False


@dataclass(frozen=True)
class Keyword(FilterPredicate):
    """Case-insensitive substring containment of the whole phrase."""

    phrase: str
    applies_to = (StreamKind.TRANSCRIPT,)

    def __post_init__(self) -> None:
        if not self.phrase:
            raise ValueError("keyword phrase must be non-empty")

    def matches(self, record: Record, kind: StreamKind) -> bool:
        return record.text is not None and self.phrase.casefold() in record.text.casefold()


@dataclass(frozen=True)
class SpeakerEquals(FilterPredicate):
    label: str
    applies_to = (StreamKind.SPEAKER,)

    def matches(self, record: Record, kind: StreamKind) -> bool:
        return record.label == self.label


@dataclass(frozen=True)
class LabelIn(FilterPredicate):
    """Label membership on scored streams.

    With ``top_only`` only the highest-scoring label is considered; otherwise any
    label whose score reaches ``score_min`` qualifies.
    """

    labels: tuple[str, ...]
    score_min: float = 0.0
    top_only: bool = False
    applies_to = _LABELLED

    def __post_init__(self) -> None:
        if not (0.0 <= self.score_min <= 1.0):
            raise ValueError(f"score_min {self.score_min} outside [0, 1]")

    def select(self, record: Record) -> LabelScore | None:
        """The best label of ``record`` satisfying this predicate, if any."""
        if not record.labels:
            return None
        candidates = record.labels[:1] if self.top_only else record.labels
        for ls in candidates:
            if (not self.labels or ls.label in self.labels) and ls.score >= self.score_min:
                return ls
        return None

    def matches(self, record: Record, kind: StreamKind) -> bool:
        return self.select(record) is not None


@dataclass(frozen=True)
class WindowOverlap(FilterPredicate):
    window: TimeSpan

    def matches(self, record: Record, kind: StreamKind) -> bool:
        return record.span.overlaps_window(self.window)

    @property
    def is_window_only(self) -> bool:
        return True


@dataclass(frozen=True)
class Conjunction(FilterPredicate):
    terms: tuple[FilterPredicate, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("conjunction must have at least one term")

    def check_applicable(self, kind: StreamKind) -> None:
        for term in self.terms:
            term.check_applicable(kind)

    def matches(self, record: Record, kind: StreamKind) -> bool:
        return all(t.matches(record, kind) for t in self.terms)

    @property
    def is_window_only(self) -> bool:
        return all(t.is_window_only for t in self.terms)

    def label_filter(self) -> LabelIn | None:
        for term in self.terms:
            if isinstance(term, LabelIn):
                return term
        return None
