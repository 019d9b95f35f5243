"""Rule-based compilation of retrieval plans into query IR and SQL text.

SQL dialect (portability artifact; the internal executor is the engine of record):

* UTF-8, uppercase keywords, two-space indentation, single-quoted literals
  with ``''`` escaping.
* One CTE per scan, in scan order, named ``tx``/``sp``/``em``/``ev``.
  Source tables: ``transcription``, ``speaker``, ``emotion``, ``sound_event``.
* Keyword filter: ``text ILIKE '%<phrase>%'``.
* Speaker filter: ``label = '<label>'``.
* Window filter: ``end > <start> AND start < <end>``.
* Scored-label filters call ``has_label(labels, ARRAY[...], <score_min>)``
  (any qualifying label) or ``top_label(labels) IN (...)`` (top-1 only).
* Fusion joins each non-anchor CTE with ``temporal_overlap(anchor, target, tau)``:
  a user-defined predicate that keeps the nearest-midpoint target among those
  meeting the anchor span widened by ``tau``. ``JOIN`` for filtered targets,
  ``LEFT JOIN`` for unfiltered ones.
* Scored fields project as ``top_label(...)``/``top_score(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .plan import FIELD_SOURCES, FusionSpec, OutputSpec, PlanError, RetrievalPlan, canonicalize, validate_plan
from .predicates import Conjunction, FilterPredicate, Keyword, LabelIn, SpeakerEquals, WindowOverlap
from .store import StreamKind

CTE_NAMES = {
    StreamKind.TRANSCRIPT: "tx",
    StreamKind.SPEAKER: "sp",
    StreamKind.EMOTION: "em",
    StreamKind.SOUND_EVENT: "ev",
}
TABLE_NAMES = {
    StreamKind.TRANSCRIPT: "transcription",
    StreamKind.SPEAKER: "speaker",
    StreamKind.EMOTION: "emotion",
    StreamKind.SOUND_EVENT: "sound_event",
}
_PAYLOAD_COLUMN = {
    StreamKind.TRANSCRIPT: "text",
    StreamKind.SPEAKER: "label",
    StreamKind.EMOTION: "labels",
    StreamKind.SOUND_EVENT: "labels",
}


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class ScanNode:
    kind: StreamKind
    predicate: Conjunction | None

    @property
    def filtered(self) -> bool:
        """True if the scan carries a stream-specific filter (not just the window)."""
        return self.predicate is not None and not self.predicate.is_window_only


@dataclass(frozen=True)
class QueryIR:
    scans: tuple[ScanNode, ...]
    fusion: FusionSpec
    projection: OutputSpec

    @property
    def anchor(self) -> ScanNode:
        return self.scans[0]

    @property
    def targets(self) -> tuple[ScanNode, ...]:
        return self.scans[1:]

    def field_source(self, name: str) -> StreamKind:
        return resolve_field(name, [s.kind for s in self.scans])


def resolve_field(name: str, kinds) -> StreamKind:
    """Stream supplying return field ``name``; start/end always come from the anchor."""
    kinds = list(kinds)
    if name in ("start", "end"):
        return kinds[0]
    for kind in FIELD_SOURCES.get(name, ()):
        if kind in kinds:
            return kind
    raise CompileError(f"return field {name!r} not resolvable from streams {[k.value for k in kinds]}")


def _stream_terms(plan: RetrievalPlan, kind: StreamKind) -> list[FilterPredicate]:
    f = plan.filters
    terms: list[FilterPredicate] = []
    if f.time_window is not None:
        terms.append(WindowOverlap(f.time_window))
    if kind is StreamKind.TRANSCRIPT and f.text is not None:
        terms.append(Keyword(f.text))
    elif kind is StreamKind.SPEAKER and f.speaker is not None:
        terms.append(SpeakerEquals(f.speaker))
    elif kind is StreamKind.EMOTION and f.emotion_labels is not None:
        terms.append(LabelIn(tuple(f.emotion_labels), 0.0, top_only=True))
    elif kind is StreamKind.SOUND_EVENT and (f.event_labels is not None or f.event_score_min is not None):
        terms.append(LabelIn(tuple(f.event_labels or ()), float(f.event_score_min or 0.0)))
    return terms


def compile_plan(plan: RetrievalPlan) -> QueryIR:
    """Compile ``plan`` (canonicalized internally) into a :class:`QueryIR`."""
    try:
        validate_plan(plan)
    except PlanError as exc:
        raise CompileError(str(exc)) from exc
    plan = canonicalize(plan)
    scans = []
    for kind in plan.streams:
        terms = _stream_terms(plan, kind)
        scans.append(ScanNode(kind, Conjunction(tuple(terms)) if terms else None))
    ir = QueryIR(tuple(scans), plan.fusion, plan.output)
    for name in ir.projection.return_fields:
        ir.field_source(name)
    return ir


# --- SQL emission -----------------------------------------------------------


def _quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


def _num(value: float) -> str:
    return f"{value:.3f}"


def _term_sql(term: FilterPredicate) -> str:
    if isinstance(term, Keyword):
        pattern = term.phrase.replace("%", r"\%").replace("_", r"\_")
        return f"text ILIKE {_quote('%' + pattern + '%')}"
    if isinstance(term, SpeakerEquals):
        return f"label = {_quote(term.label)}"
    if isinstance(term, WindowOverlap):
        return f"end > {_num(term.window.start)} AND start < {_num(term.window.end)}"
    if isinstance(term, LabelIn):
        labels = ", ".join(_quote(l) for l in term.labels)
        if term.top_only:
            return f"top_label(labels) IN ({labels})"
        return f"has_label(labels, ARRAY[{labels}], {_num(term.score_min)})"
    raise CompileError(f"cannot render predicate {term!r}")


def _cte_sql(scan: ScanNode, ir: QueryIR) -> str:
    name = CTE_NAMES[scan.kind]
    lines = [
        f"{name} AS (",
        f"  SELECT start, end, {_PAYLOAD_COLUMN[scan.kind]}",
        f"  FROM {TABLE_NAMES[scan.kind]}",
    ]
    if scan.predicate is not None:
        terms = [_term_sql(t) for t in scan.predicate.terms]
        lines.append(f"  WHERE {terms[0]}")
        lines.extend(f"    AND {t}" for t in terms[1:])
    lines.append(")")
    return "\n".join(lines)


def _projection_sql(name: str, ir: QueryIR) -> str:
    cte = CTE_NAMES[ir.field_source(name)]
    if name in ("start", "end", "text"):
        return f"{cte}.{name}"
    if name == "speaker":
        return f"{cte}.label AS speaker"
    if name == "score":
        return f"top_score({cte}.labels) AS score"
    return f"top_label({cte}.labels) AS {name}"


def emit_sql(ir: QueryIR) -> str:
    """Render ``ir`` as deterministic SQL text (see module docstring for the dialect)."""
    ctes = ",\n".join(_cte_sql(scan, ir) for scan in ir.scans)
    anchor = CTE_NAMES[ir.anchor.kind]
    projection = ", ".join(_projection_sql(name, ir) for name in ir.projection.return_fields)
    lines = ["WITH", ctes, "SELECT", f"  {projection}", f"FROM {anchor}"]
    tau = _num(ir.fusion.effective_tau)
    for target in ir.targets:
        join = "JOIN" if target.filtered else "LEFT JOIN"
        name = CTE_NAMES[target.kind]
        lines.append(f"{join} {name} ON temporal_overlap({anchor}, {name}, {tau})")
    return "\n".join(lines) + ";\n"
