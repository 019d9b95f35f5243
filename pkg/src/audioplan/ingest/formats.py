"""File formats: RTTM, JSON-lines streams, manifests, on-disk databases."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from ..store import LabelScore, Record, RecordingDatabase, StoreError, StreamKind, TimeSpan


class IngestError(ValueError):
    """Input file problem; message carries file and line context when known."""


@dataclass(frozen=True)
class RttmTurn:
    file_id: str
    onset: float
    duration: float
    label: str

    @property
    def record(self) -> Record:
        return Record(TimeSpan(self.onset, self.onset + self.duration), label=self.label)


def parse_rttm_turns(lines: Iterable[str], source: str = "<rttm>") -> list[RttmTurn]:
    turns = []
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            raise IngestError(f"{source}:{lineno}: expected at least 8 fields, got {len(fields)}")
        try:
            onset, dur = float(fields[3]), float(fields[4])
        except ValueError:
            raise IngestError(f"{source}:{lineno}: onset/duration not numeric") from None
        if not (math.isfinite(onset) and math.isfinite(dur)) or onset < 0 or dur < 0:
            raise IngestError(f"{source}:{lineno}: negative or non-finite onset/duration")
        turns.append(RttmTurn(fields[1], onset, dur, fields[7]))
    return turns


def parse_rttm(lines: Iterable[str], source: str = "<rttm>") -> list[Record]:
    """Speaker records ``[onset, onset + duration]`` from RTTM SPEAKER lines."""
    return [t.record for t in parse_rttm_turns(lines, source)]


def format_rttm(file_id: str, records: Iterable[Record]) -> str:
    out = []
    for r in records:
        dur = round(r.span.end - r.span.start, 3)
        out.append(f"SPEAKER {file_id} 1 {r.span.start:.3f} {dur:.3f} <NA> <NA> {r.label} <NA> <NA>\n")
    return "".join(out)


# --- JSON lines ---------------------------------------------------------------


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(row, dict):
                raise IngestError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, row


def record_from_row(row: dict[str, Any], kind: StreamKind) -> Record:
    span = TimeSpan(row["start"], row["end"])
    if kind is StreamKind.TRANSCRIPT:
        if not isinstance(row.get("text"), str):
            raise IngestError("transcript row needs a string 'text'")
        return Record(span, text=row["text"])
    if kind is StreamKind.SPEAKER:
        return Record(span, label=str(row["label"]))
    labels = row.get("labels")
    if not isinstance(labels, list):
        raise IngestError("scored row needs a 'labels' list")
    return Record(span, labels=tuple(LabelScore(str(ls["label"]), ls["score"]) for ls in labels))


def read_stream_rows(path: Path, kind: StreamKind) -> list[tuple[int, str | None, Record]]:
    """``(line number, source id, record)`` for each row of a stream file."""
    out = []
    for lineno, row in _iter_jsonl(path):
        try:
            rec = record_from_row(row, kind)
        except (KeyError, TypeError, StoreError, IngestError) as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from None
        source = row.get("source_id")
        out.append((lineno, None if source is None else str(source), rec))
    return out


def record_to_row(rec: Record, source_id: str | None = None) -> dict[str, Any]:
    row: dict[str, Any] = {"start": rec.span.start, "end": rec.span.end}
    if source_id is not None:
        row["source_id"] = source_id
    if rec.text is not None:
        row["text"] = rec.text
    elif rec.label is not None:
        row["label"] = rec.label
    else:
        row["labels"] = [{"label": ls.label, "score": ls.score} for ls in rec.labels or ()]
    return row


def write_jsonl(path: Path, rows: Iterable[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


# --- manifest -----------------------------------------------------------------


@dataclass(frozen=True)
class SourceSegment:
    source_id: str
    offset: float
    duration: float


@dataclass(frozen=True)
class ManifestEntry:
    recording_id: str
    duration: float
    diarization: Path
    transcript: Path | None = None
    emotion: Path | None = None
    events: Path | None = None
    sources: tuple[SourceSegment, ...] = field(default=())

    def __post_init__(self) -> None:
        prev = -math.inf
        for s in self.sources:
            if s.offset < prev:
                raise IngestError(f"{self.recording_id}: source offsets must be non-decreasing")
            if s.offset < 0 or s.duration < 0 or s.offset + s.duration > self.duration + 1e-6:
                raise IngestError(f"{self.recording_id}: source {s.source_id} exceeds recording duration")
            prev = s.offset


_PATH_KEYS = ("diarization", "transcript", "emotion", "events")


def entry_from_dict(doc: dict[str, Any], base: Path) -> ManifestEntry:
    try:
        paths = {k: (base / doc[k]) if doc.get(k) else None for k in _PATH_KEYS}
        if paths["diarization"] is None:
            raise IngestError(f"{doc.get('recording_id')}: diarization path is required")
        sources = tuple(
            SourceSegment(str(s["source_id"]), float(s["offset"]), float(s["duration"])) for s in doc.get("sources", ())
        )
        return ManifestEntry(
            recording_id=str(doc["recording_id"]),
            duration=float(doc["duration"]),
            sources=sources,
            **paths,  # type: ignore[arg-type]
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, IngestError):
            raise
        raise IngestError(f"bad manifest entry: {exc}") from None


def entry_to_dict(entry: ManifestEntry, base: Path) -> dict[str, Any]:
    doc: dict[str, Any] = {"recording_id": entry.recording_id, "duration": entry.duration}
    for key in _PATH_KEYS:
        p = getattr(entry, key)
        if p is not None:
            doc[key] = Path(os.path.relpath(p, base)).as_posix()
    if entry.sources:
        doc["sources"] = [{"source_id": s.source_id, "offset": s.offset, "duration": s.duration} for s in entry.sources]
    return doc


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IngestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("recordings"), list):
        raise IngestError(f"{path}: expected {{'recordings': [...]}}")
    return [entry_from_dict(d, path.parent) for d in doc["recordings"]]


def write_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"recordings": [entry_to_dict(e, path.parent) for e in entries]}
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# --- on-disk database -----------------------------------------------------------


def save_database(db: RecordingDatabase, directory: str | Path) -> Path:
    """Persist a finalized database as ``meta.json`` plus one JSON-lines file per stream."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"recording_id": db.recording_id, "duration": db.duration}
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    for kind in StreamKind:
        write_jsonl(directory / f"{kind.value}.jsonl", (record_to_row(r) for r in db.streams[kind]))
    return directory


def load_database(directory: str | Path) -> RecordingDatabase:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IngestError(f"no database at {directory}") from None
    db = RecordingDatabase(meta["recording_id"], float(meta["duration"]))
    for kind in StreamKind:
        path = directory / f"{kind.value}.jsonl"
        if path.exists():
            for _, _, rec in read_stream_rows(path, kind):
                db.insert_record(kind, rec)
    return db.finalize()
