"""Execution of compiled queries against a finalized database.

Each anchor record that passes its scan predicate yields at most one row.
Every non-anchor stream is scanned with its own predicate first and then
attached to the anchor by nearest-midpoint fusion within ``tau``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .compiler import QueryIR, ScanNode
from .plan import OutputSpec
from .predicates import LabelIn
from .store import STREAM_ORDER, LabelScore, Record, RecordingDatabase, StreamKind, TimeSpan, overlap_candidates

Value = str | float | None


@dataclass(frozen=True)
class FusedRow:
    anchor_span: TimeSpan
    values: dict[str, Value]
    match_flags: dict[StreamKind, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class RetrievedSegments:
    rows: tuple[FusedRow, ...]
    projection: OutputSpec
    context_text: str
    context_size: int

    def __len__(self) -> int:
        return len(self.rows)


def midpoint_distance(a: TimeSpan, b: TimeSpan) -> float:
    return round(abs((a.start + a.end) - (b.start + b.end)) / 2.0, 9)


def temporal_fuse(anchor: Record, targets: Sequence[Record], tau: float) -> Record | None:
    """Nearest-midpoint target among those meeting the anchor widened by ``tau``.

    Ties go to the earlier target start, then the earlier end.
    """
    lo, hi = anchor.span.widen(tau)
    best: Record | None = None
    best_key: tuple[float, float, float] | None = None
    for t in targets:
        if t.span.end < lo or t.span.start > hi:
            continue
        key = (midpoint_distance(anchor.span, t.span), t.span.start, t.span.end)
        if best_key is None or key < best_key:
            best, best_key = t, key
    return best


def _selected_label(record: Record, scan: ScanNode) -> LabelScore | None:
    label_filter = scan.predicate.label_filter() if scan.predicate is not None else None
    if isinstance(label_filter, LabelIn):
        chosen = label_filter.select(record)
        if chosen is not None:
            return chosen
    return record.top


def _project(name: str, source: StreamKind, rec: Record | None, anchor: Record, scan: ScanNode) -> Value:
    if name == "start":
        return anchor.span.start
    if name == "end":
        return anchor.span.end
    if rec is None:
        return None
    if name == "text":
        return rec.text
    if name == "speaker":
        return rec.label
    chosen = _selected_label(rec, scan)
    if chosen is None:
        return None
    return chosen.score if name == "score" else chosen.label


def execute(ir: QueryIR, db: RecordingDatabase) -> RetrievedSegments:
    anchor_scan = ir.anchor
    tau = ir.fusion.effective_tau
    sources = {name: ir.field_source(name) for name in ir.projection.return_fields}
    scans = {s.kind: s for s in ir.scans}

    anchors = db.scan(anchor_scan.kind, anchor_scan.predicate)
    targets: dict[StreamKind, tuple[list[Record], float]] = {}
    for scan in ir.targets:
        recs = db.scan(scan.kind, scan.predicate)
        targets[scan.kind] = (recs, max((r.span.duration for r in recs), default=0.0))

    rows = []
    for anchor in anchors:
        matched: dict[StreamKind, Record | None] = {anchor_scan.kind: anchor}
        flags: dict[StreamKind, bool] = {}
        dropped = False
        for scan in ir.targets:
            recs, max_len = targets[scan.kind]
            near = overlap_candidates(recs, anchor.span, tau, max_len)
            hit = temporal_fuse(anchor, near, tau)
            flags[scan.kind] = hit is not None
            if hit is None and scan.filtered:
                dropped = True
                break
            matched[scan.kind] = hit
        if dropped:
            continue
        values = {
            name: _project(name, src, matched.get(src), anchor, scans[src])
            for name, src in sources.items()
        }
        rows.append(FusedRow(anchor.span, values, flags))
    text, size = serialize_context(rows, ir.projection)
    return RetrievedSegments(tuple(rows), ir.projection, text, size)


# --- serialization ----------------------------------------------------------


def format_number(value: float) -> str:
    """Fixed-point with 2-3 decimals: 20.5 -> '20.50', 20.505 -> '20.505'."""
    text = f"{value:.3f}"
    return text[:-1] if text.endswith("0") else text


def format_value(value: Value) -> str:
    if value is None:
        return "null"
    if isinstance(value, float):
        return format_number(value)
    return " ".join(str(value).split())


def serialize_context(rows: Iterable[FusedRow], projection: OutputSpec) -> tuple[str, int]:
    """Tab-separated ``field=value`` lines; size estimate is ceil(bytes / 4)."""
    lines = [
        "\t".join(f"{name}={format_value(row.values.get(name))}" for name in projection.return_fields)
        for row in rows
    ]
    text = "".join(line + "\n" for line in lines)
    return text, estimate_tokens(text)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


def serialize_database(db: RecordingDatabase) -> str:
    """Every record of every stream in the context format (full-context baseline)."""
    out = []
    for kind in STREAM_ORDER:
        for rec in db.streams[kind]:
            if rec.text is not None:
                payload = f"text={format_value(rec.text)}"
            elif rec.label is not None:
                payload = f"speaker={format_value(rec.label)}"
            else:
                payload = "labels=" + ",".join(f"{ls.label}:{format_number(ls.score)}" for ls in rec.labels or ())
            out.append(
                f"stream={kind.value}\tstart={format_number(rec.span.start)}\tend={format_number(rec.span.end)}\t{payload}\n"
            )
    return "".join(out)


def rows_to_csv(segments: RetrievedSegments) -> str:
    """CSV dump (header = projection) for diffing against external SQL engines."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    fields = list(segments.projection.return_fields)
    writer.writerow(fields)
    for row in segments.rows:
        writer.writerow(["" if row.values.get(f) is None else format_value(row.values[f]) for f in fields])
    return buf.getvalue()
