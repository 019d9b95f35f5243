"""Assemble a :class:`RecordingDatabase` from perception-output files."""

from __future__ import annotations

import logging
from collections import defaultdict
from pathlib import Path

from ..store import Record, RecordingDatabase, StoreError, StreamKind, TimeSpan
from .formats import IngestError, ManifestEntry, parse_rttm_turns, read_stream_rows

log = logging.getLogger(__name__)


def _offset_for(entry: ManifestEntry, source_id: str | None, where: str) -> float:
    if not entry.sources:
        return 0.0
    offsets = {s.source_id: s.offset for s in entry.sources}
    if source_id is None:
        if len(offsets) == 1:
            return next(iter(offsets.values()))
        raise IngestError(f"{where}: row has no source_id but the recording is concatenated")
    if source_id not in offsets:
        raise IngestError(f"{where}: unknown source {source_id!r}")
    return offsets[source_id]


def _read_aligned(
    entry: ManifestEntry, path: Path, kind: StreamKind, slots: dict[TimeSpan, list[int]], n: int
) -> list[Record | None]:
    """Rows of ``path`` placed onto diarization slots by exact span."""
    placed: list[Record | None] = [None] * n
    free = {span: list(idx) for span, idx in slots.items()}
    for lineno, source, rec in read_stream_rows(path, kind):
        where = f"{path}:{lineno}"
        rec = rec.shifted(_offset_for(entry, source, where))
        bucket = free.get(rec.span)
        if not bucket:
            raise IngestError(f"{where}: [{rec.span.start}, {rec.span.end}] has no matching diarization span")
        placed[bucket.pop(0)] = rec
    return placed


def build_database(entry: ManifestEntry) -> RecordingDatabase:
    """Load, align and finalize the streams listed in ``entry``."""
    if not entry.diarization.exists():
        raise IngestError(f"diarization file not found: {entry.diarization}")
    with open(entry.diarization, encoding="utf-8") as fh:
        turns = parse_rttm_turns(fh, str(entry.diarization))

    speakers: list[Record] = []
    for i, turn in enumerate(turns):
        offset = _offset_for(entry, turn.file_id, f"{entry.diarization}:turn {i + 1}") if entry.sources else 0.0
        speakers.append(turn.record.shifted(offset))
    speakers.sort(key=Record.sort_key)
    _warn_self_overlap(entry.recording_id, speakers)

    slots: dict[TimeSpan, list[int]] = defaultdict(list)
    for i, rec in enumerate(speakers):
        slots[rec.span].append(i)

    db = RecordingDatabase(entry.recording_id, entry.duration)
    try:
        for rec in speakers:
            db.insert_record(StreamKind.SPEAKER, rec)
        for kind, path in ((StreamKind.TRANSCRIPT, entry.transcript), (StreamKind.EMOTION, entry.emotion)):
            if path is None:
                continue
            if not path.exists():
                raise IngestError(f"{kind.value} file not found: {path}")
            placed = _read_aligned(entry, path, kind, slots, len(speakers))
            missing = 0
            for spk, rec in zip(speakers, placed):
                if rec is None:
                    missing += 1
                    rec = Record(spk.span, text="") if kind is StreamKind.TRANSCRIPT else Record(spk.span, labels=())
                db.insert_record(kind, rec)
            if missing:
                log.warning("%s: %d diarization spans without %s rows; filled empty", entry.recording_id, missing, kind.value)
        if entry.events is not None:
            if not entry.events.exists():
                raise IngestError(f"events file not found: {entry.events}")
            for lineno, source, rec in read_stream_rows(entry.events, StreamKind.SOUND_EVENT):
                where = f"{entry.events}:{lineno}"
                db.insert_record(StreamKind.SOUND_EVENT, rec.shifted(_offset_for(entry, source, where)))
        return db.finalize()
    except StoreError as exc:
        raise IngestError(f"{entry.recording_id}: {exc}") from None


def _warn_self_overlap(recording_id: str, speakers: list[Record]) -> None:
    last_end: dict[str, float] = {}
    for rec in speakers:
        label = rec.label or ""
        if label in last_end and rec.span.start < last_end[label]:
            log.warning("%s: overlapping turns for %s at %.3f", recording_id, label, rec.span.start)
        last_end[label] = max(last_end.get(label, 0.0), rec.span.end)
