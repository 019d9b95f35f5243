"""Time-aligned per-recording metadata store.

A :class:`RecordingDatabase` holds four modality streams of interval records.
Transcript, speaker and emotion records share the diarization boundaries;
sound-event records live on their own grid.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .predicates import FilterPredicate


class StoreError(ValueError):
    """Raised on invalid records or misuse of a database."""


class StreamKind(str, Enum):
    TRANSCRIPT = "transcript"
    SPEAKER = "speaker"
    EMOTION = "emotion"
    SOUND_EVENT = "sound_event"

    @property
    def order(self) -> int:
        return _KIND_ORDER[self]

    def __str__(self) -> str:
        return self.value


STREAM_ORDER: tuple[StreamKind, ...] = tuple(StreamKind)
_KIND_ORDER = {kind: i for i, kind in enumerate(STREAM_ORDER)}
ALIGNED_KINDS = (StreamKind.TRANSCRIPT, StreamKind.SPEAKER, StreamKind.EMOTION)


def round_ms(value: float) -> float:
    return round(float(value), 3)


@dataclass(frozen=True, order=True)
class TimeSpan:
    """Closed interval in seconds, snapped to a 1 ms grid."""

    start: float
    end: float

    def __post_init__(self) -> None:
        start, end = float(self.start), float(self.end)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise StoreError(f"non-finite span [{self.start}, {self.end}]")
        if start < 0 or end < 0:
            raise StoreError(f"negative span [{start}, {end}]")
        start, end = round_ms(start), round_ms(end)
        if start > end:
            raise StoreError(f"span start {start} after end {end}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def midpoint(self) -> float:
        return (self.start + self.end) / 2.0

    @property
    def duration(self) -> float:
        return self.end - self.start

    def intersects(self, other: TimeSpan) -> bool:
        """Closed-interval test: a shared endpoint counts."""
        return self.start <= other.end and other.start <= self.end

    def overlaps_window(self, window: TimeSpan) -> bool:
        """Window-filter semantics: positive-length intersection.

        Zero-length spans (and zero-length windows) fall back to the closed test
        so that point records inside a window are not lost.
        """
        if self.start == self.end or window.start == window.end:
            return self.intersects(window)
        return self.start < window.end and window.start < self.end

    def widen(self, tau: float) -> tuple[float, float]:
        # rounding lands grid-exact bounds on the same double as the record times
        return round(self.start - tau, 9), round(self.end + tau, 9)

    def shifted(self, offset: float) -> TimeSpan:
        return TimeSpan(self.start + offset, self.end + offset)


@dataclass(frozen=True)
class LabelScore:
    label: str
    score: float

    def __post_init__(self) -> None:
        if not isinstance(self.label, str) or not self.label:
            raise StoreError("label must be a non-empty string")
        score = float(self.score)
        if not (0.0 <= score <= 1.0):
            raise StoreError(f"score {self.score!r} for {self.label!r} outside [0, 1]")
        object.__setattr__(self, "score", score)


@dataclass(frozen=True)
class Record:
    """One observation. Exactly one of ``text``, ``label``, ``labels`` is set."""

    span: TimeSpan
    text: str | None = None
    label: str | None = None
    labels: tuple[LabelScore, ...] | None = None

    def __post_init__(self) -> None:
        present = [v is not None for v in (self.text, self.label, self.labels)]
        if sum(present) != 1:
            raise StoreError("record needs exactly one payload of text/label/labels")
        if self.labels is not None:
            ordered = sorted(self.labels, key=lambda ls: -ls.score)
            object.__setattr__(self, "labels", tuple(ordered))
        if self.label is not None and not self.label:
            raise StoreError("speaker label must be non-empty")

    @classmethod
    def transcript(cls, start: float, end: float, text: str) -> Record:
        return cls(TimeSpan(start, end), text=text)

    @classmethod
    def speaker(cls, start: float, end: float, label: str) -> Record:
        return cls(TimeSpan(start, end), label=label)

    @classmethod
    def scored(cls, start: float, end: float, labels: Iterable[tuple[str, float]]) -> Record:
        return cls(TimeSpan(start, end), labels=tuple(LabelScore(l, s) for l, s in labels))

    @property
    def top(self) -> LabelScore | None:
        return self.labels[0] if self.labels else None

    def fits(self, kind: StreamKind) -> bool:
        if kind is StreamKind.TRANSCRIPT:
            return self.text is not None
        if kind is StreamKind.SPEAKER:
            return self.label is not None
        return self.labels is not None

    def sort_key(self) -> tuple[float, float]:
        return (self.span.start, self.span.end)

    def shifted(self, offset: float) -> Record:
        return Record(self.span.shifted(offset), self.text, self.label, self.labels)


@dataclass
class RecordingDatabase:
    """Per-recording store D(a). Mutable until :meth:`finalize`."""

    recording_id: str
    duration: float
    streams: dict[StreamKind, list[Record]] = field(default_factory=dict)
    _final: bool = field(default=False, repr=False)
    _starts: dict[StreamKind, list[float]] = field(default_factory=dict, repr=False)
    _max_len: dict[StreamKind, float] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not math.isfinite(self.duration) or self.duration < 0:
            raise StoreError(f"bad duration {self.duration!r}")
        for kind in STREAM_ORDER:
            self.streams.setdefault(kind, [])

    @property
    def finalized(self) -> bool:
        return self._final

    def records(self, kind: StreamKind) -> Sequence[Record]:
        return tuple(self.streams[kind]) if not self._final else self.streams[kind]

    def insert_record(self, kind: StreamKind, record: Record) -> None:
        if self._final:
            raise StoreError(f"database {self.recording_id!r} is finalized")
        kind = StreamKind(kind)
        if not record.fits(kind):
            raise StoreError(f"payload does not match stream {kind.value}")
        if record.span.end > round_ms(self.duration):
            raise StoreError(
                f"span [{record.span.start}, {record.span.end}] exceeds duration {self.duration}"
            )
        self.streams[kind].append(record)

    def finalize(self) -> RecordingDatabase:
        if self._final:
            return self
        for kind in STREAM_ORDER:
            # Stable sort keeps ingestion order for identical spans.
            self.streams[kind] = sorted(self.streams[kind], key=Record.sort_key)
        _check_shared_boundaries(self.streams)
        for kind, recs in self.streams.items():
            self._starts[kind] = [r.span.start for r in recs]
            self._max_len[kind] = max((r.span.duration for r in recs), default=0.0)
        # Freeze the per-stream lists.
        self.streams = {k: tuple(v) for k, v in self.streams.items()}  # type: ignore[misc]
        self._final = True
        return self

    def _require_final(self) -> None:
        if not self._final:
            raise StoreError(f"database {self.recording_id!r} is not finalized")

    def scan(self, kind: StreamKind, predicate: FilterPredicate | None = None) -> list[Record]:
        """Records of ``kind`` satisfying ``predicate`` (None = all), in span order."""
        self._require_final()
        kind = StreamKind(kind)
        if predicate is None:
            return list(self.streams[kind])
        predicate.check_applicable(kind)
        return [r for r in self.streams[kind] if predicate.matches(r, kind)]

    def overlap_candidates(self, kind: StreamKind, anchor: TimeSpan, tau: float) -> list[Record]:
        return overlap_candidates(self._require_records(kind), anchor, tau, self._max_len[kind])

    def _require_records(self, kind: StreamKind) -> Sequence[Record]:
        self._require_final()
        return self.streams[StreamKind(kind)]

    def speakers(self) -> list[str]:
        return sorted({r.label for r in self.streams[StreamKind.SPEAKER] if r.label})

    def event_labels(self) -> list[str]:
        return sorted({ls.label for r in self.streams[StreamKind.SOUND_EVENT] for ls in r.labels or ()})


def overlap_candidates(
    records: Sequence[Record], anchor: TimeSpan, tau: float, max_len: float | None = None
) -> list[Record]:
    """Records (sorted by start) whose span meets ``[anchor.start - tau, anchor.end + tau]``.

    ``max_len`` bounds record duration so the scan can start from a binary search.
    """
    if tau < 0:
        raise StoreError(f"tau must be non-negative, got {tau}")
    lo, hi = anchor.widen(tau)
    if max_len is None:
        max_len = max((r.span.duration for r in records), default=0.0)
    first = bisect.bisect_left(records, lo - max_len, key=lambda r: r.span.start)
    out = []
    for rec in records[first:]:
        if rec.span.start > hi:
            break
        if rec.span.end >= lo:
            out.append(rec)
    return out


def _check_shared_boundaries(streams: dict[StreamKind, list[Record]]) -> None:
    populated = [k for k in ALIGNED_KINDS if streams[k]]
    if len(populated) < 2:
        return
    base = populated[0]
    base_spans = [r.span for r in streams[base]]
    for other in populated[1:]:
        other_spans = [r.span for r in streams[other]]
        for a, b in zip(base_spans, other_spans):
            if a != b:
                raise StoreError(
                    f"shared-boundary violation: {base.value} [{a.start}, {a.end}] "
                    f"vs {other.value} [{b.start}, {b.end}]"
                )
        if len(base_spans) != len(other_spans):
            n = min(len(base_spans), len(other_spans))
            longer, spans = (base, base_spans) if len(base_spans) > n else (other, other_spans)
            extra = spans[n]
            raise StoreError(
                f"shared-boundary violation: {longer.value} [{extra.start}, {extra.end}] "
                f"has no counterpart"
            )
