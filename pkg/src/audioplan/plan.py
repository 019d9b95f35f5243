"""Retrieval plan contract: data model, JSON parsing, validation, canonical form.

The interchange document is a JSON object with the keys ``streams``,
``filters``, ``fusion``, ``output`` and ``answer_schema``. Parsing never
repairs a document; the first violated rule is reported as a
:class:`PlanError` carrying a JSON-pointer-like path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

from .store import STREAM_ORDER, StreamKind, TimeSpan

DEFAULT_TAU = 2.5
DEFAULT_EVENT_SCORE_MIN = 0.5
ABSTAIN_REPLY = "This question is not answerable."

RETURN_FIELDS = ("start", "end", "speaker", "text", "emotion", "event", "score")

# Which streams can supply each return field.
FIELD_SOURCES: dict[str, tuple[StreamKind, ...]] = {
    "start": tuple(StreamKind),
    "end": tuple(StreamKind),
    "speaker": (StreamKind.SPEAKER,),
    "text": (StreamKind.TRANSCRIPT,),
    "emotion": (StreamKind.EMOTION,),
    "event": (StreamKind.SOUND_EVENT,),
    "score": (StreamKind.SOUND_EVENT, StreamKind.EMOTION),
}

STREAM_ALIASES = {"transcription": StreamKind.TRANSCRIPT}


class PlanError(ValueError):
    """A plan document or object violates the contract."""

    def __init__(self, message: str, path: str = "", position: int | None = None):
        self.path = path
        self.position = position
        where = path or "/"
        if position is not None:
            where = f"{where} (char {position})"
        super().__init__(f"{where}: {message}")
        self.reason = message


def stream_from_name(name: Any, path: str = "") -> StreamKind:
    if isinstance(name, StreamKind):
        return name
    if not isinstance(name, str):
        raise PlanError(f"stream name must be a string, got {name!r}", path)
    if name in STREAM_ALIASES:
        return STREAM_ALIASES[name]
    try:
        return StreamKind(name)
    except ValueError:
        raise PlanError(f"unknown stream {name!r}", path) from None


# --- answer schemas ---------------------------------------------------------


@dataclass(frozen=True)
class FreeText:
    pass


@dataclass(frozen=True)
class EnumChoice:
    values: tuple[str, ...]


@dataclass(frozen=True)
class IntegerAnswer:
    pass


@dataclass(frozen=True)
class SpanList:
    pass


@dataclass(frozen=True)
class LabelList:
    pass


@dataclass(frozen=True)
class Ordering:
    n: int


@dataclass(frozen=True)
class Abstainable:
    inner: AnswerSchema


AnswerSchema = FreeText | EnumChoice | IntegerAnswer | SpanList | LabelList | Ordering | Abstainable


def check_answer_schema(schema: AnswerSchema, path: str = "/answer_schema") -> None:
    if isinstance(schema, EnumChoice):
        if not schema.values:
            raise PlanError("enum must be non-empty", path)
        if not all(isinstance(v, str) and v for v in schema.values):
            raise PlanError("enum values must be non-empty strings", path)
        if len(set(schema.values)) != len(schema.values):
            raise PlanError("enum values must be distinct", path)
    elif isinstance(schema, Ordering):
        if isinstance(schema.n, bool) or not isinstance(schema.n, int) or schema.n < 2:
            raise PlanError("ordering needs n >= 2", path)
    elif isinstance(schema, Abstainable):
        if isinstance(schema.inner, Abstainable):
            raise PlanError("abstainable cannot be nested", path)
        check_answer_schema(schema.inner, path)
    elif not isinstance(schema, (FreeText, IntegerAnswer, SpanList, LabelList)):
        raise PlanError(f"unknown answer schema {schema!r}", path)


_SPAN_ITEM = {
    "type": "object",
    "properties": {
        "start": {"type": "number"},
        "end": {"type": "number"},
        "label": {"type": "string"},
    },
    "required": ["start", "end", "label"],
}


def answer_schema_to_json(schema: AnswerSchema) -> dict[str, Any]:
    """JSON-schema rendering of an answer schema (the wire form)."""
    if isinstance(schema, Abstainable):
        return {"anyOf": [answer_schema_to_json(schema.inner), {"const": ABSTAIN_REPLY}]}
    if isinstance(schema, FreeText):
        key, prop = "answer", {"type": "string"}
    elif isinstance(schema, EnumChoice):
        key, prop = "answer", {"type": "string", "enum": list(schema.values)}
    elif isinstance(schema, IntegerAnswer):
        key, prop = "answer", {"type": "integer"}
    elif isinstance(schema, SpanList):
        key, prop = "segments", {"type": "array", "items": _SPAN_ITEM}
    elif isinstance(schema, LabelList):
        key, prop = "labels", {"type": "array", "items": {"type": "string"}}
    elif isinstance(schema, Ordering):
        key, prop = "order", {
            "type": "array",
            "items": {"type": "integer"},
            "minItems": schema.n,
            "maxItems": schema.n,
        }
    else:
        raise PlanError(f"unknown answer schema {schema!r}", "/answer_schema")
    return {"type": "object", "properties": {key: prop}, "required": [key]}


def answer_schema_from_json(doc: Any, path: str = "/answer_schema") -> AnswerSchema:
    if not isinstance(doc, dict):
        raise PlanError("answer_schema must be an object", path)
    if "anyOf" in doc:
        _only_keys(doc, {"anyOf"}, path)
        alts = doc["anyOf"]
        if not isinstance(alts, list) or len(alts) != 2 or alts[1] != {"const": ABSTAIN_REPLY}:
            raise PlanError("anyOf must be [<schema>, {const: abstention reply}]", path)
        inner = answer_schema_from_json(alts[0], f"{path}/anyOf/0")
        schema: AnswerSchema = Abstainable(inner)
        check_answer_schema(schema, path)
        return schema
    _only_keys(doc, {"type", "properties", "required"}, path)
    if "type" in doc and doc["type"] != "object":
        raise PlanError("answer_schema type must be 'object'", f"{path}/type")
    props = doc.get("properties")
    if not isinstance(props, dict) or len(props) != 1:
        raise PlanError("properties must declare exactly one answer key", f"{path}/properties")
    (key, prop), = props.items()
    ppath = f"{path}/properties/{key}"
    if doc.get("required") != [key]:
        raise PlanError(f"required must be [{key!r}]", f"{path}/required")
    if not isinstance(prop, dict):
        raise PlanError("property must be an object", ppath)
    ptype = prop.get("type")
    if key == "answer":
        if ptype == "string" and "enum" in prop:
            _only_keys(prop, {"type", "enum"}, ppath)
            values = prop["enum"]
            if not isinstance(values, list):
                raise PlanError("enum must be a list", f"{ppath}/enum")
            schema = EnumChoice(tuple(values))
        elif ptype == "string":
            _only_keys(prop, {"type"}, ppath)
            schema = FreeText()
        elif ptype == "integer":
            _only_keys(prop, {"type"}, ppath)
            schema = IntegerAnswer()
        else:
            raise PlanError(f"unsupported answer type {ptype!r}", f"{ppath}/type")
    elif key == "segments":
        if prop != {"type": "array", "items": _SPAN_ITEM}:
            raise PlanError("segments must be an array of {start, end, label} objects", ppath)
        schema = SpanList()
    elif key == "labels":
        if prop != {"type": "array", "items": {"type": "string"}}:
            raise PlanError("labels must be an array of strings", ppath)
        schema = LabelList()
    elif key == "order":
        _only_keys(prop, {"type", "items", "minItems", "maxItems"}, ppath)
        n = prop.get("minItems")
        if (
            ptype != "array"
            or prop.get("items") != {"type": "integer"}
            or isinstance(n, bool)
            or not isinstance(n, int)
            or type(prop.get("maxItems")) is not int
            or prop.get("maxItems") != n
        ):
            raise PlanError("order must be an integer array with minItems == maxItems", ppath)
        schema = Ordering(n)
    else:
        raise PlanError(f"unknown answer key {key!r}", ppath)
    check_answer_schema(schema, path)
    return schema


# --- plan -------------------------------------------------------------------


@dataclass(frozen=True)
class FilterSet:
    text: str | None = None
    speaker: str | None = None
    emotion_labels: tuple[str, ...] | None = None
    event_labels: tuple[str, ...] | None = None
    event_score_min: float | None = None
    time_window: TimeSpan | None = None

    def targets(self) -> dict[str, StreamKind | None]:
        """Set filter fields mapped to the stream they constrain (None = global)."""
        owner = {
            "text": StreamKind.TRANSCRIPT,
            "speaker": StreamKind.SPEAKER,
            "emotion_labels": StreamKind.EMOTION,
            "event_labels": StreamKind.SOUND_EVENT,
            "event_score_min": StreamKind.SOUND_EVENT,
            "time_window": None,
        }
        return {name: kind for name, kind in owner.items() if getattr(self, name) is not None}


@dataclass(frozen=True)
class FusionSpec:
    anchor: StreamKind
    tau: float | None = None

    @property
    def effective_tau(self) -> float:
        return DEFAULT_TAU if self.tau is None else self.tau


@dataclass(frozen=True)
class OutputSpec:
    return_fields: tuple[str, ...]


@dataclass(frozen=True)
class RetrievalPlan:
    streams: tuple[StreamKind, ...]
    fusion: FusionSpec
    output: OutputSpec
    answer_schema: AnswerSchema = field(default_factory=FreeText)
    filters: FilterSet = field(default_factory=FilterSet)


def validate_plan(plan: RetrievalPlan) -> None:
    """Raise :class:`PlanError` for the first broken invariant of ``plan``."""
    if not plan.streams:
        raise PlanError("streams must be non-empty", "/streams")
    for i, s in enumerate(plan.streams):
        if not isinstance(s, StreamKind):
            raise PlanError(f"unknown stream {s!r}", f"/streams/{i}")
    if len(set(plan.streams)) != len(plan.streams):
        raise PlanError("duplicate stream", "/streams")
    selected = set(plan.streams)

    f = plan.filters
    for name, kind in f.targets().items():
        if kind is not None and kind not in selected:
            raise PlanError(f"filter targets unselected stream {kind.value}", f"/filters/{name}")
    for name in ("text", "speaker"):
        value = getattr(f, name)
        if value is not None and (not isinstance(value, str) or not value):
            raise PlanError(f"{name} must be a non-empty string", f"/filters/{name}")
    for name in ("emotion_labels", "event_labels"):
        value = getattr(f, name)
        if value is None:
            continue
        if not value or not all(isinstance(v, str) and v for v in value):
            raise PlanError(f"{name} must be a non-empty list of non-empty strings", f"/filters/{name}")
        if len(set(value)) != len(value):
            raise PlanError(f"{name} has duplicates", f"/filters/{name}")
    if f.event_score_min is not None:
        v = f.event_score_min
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not (0.0 <= v <= 1.0):
            raise PlanError("event_score_min must be a number in [0, 1]", "/filters/event_score_min")
    if f.time_window is not None and not isinstance(f.time_window, TimeSpan):
        raise PlanError("time_window must be a span", "/filters/time_window")

    fu = plan.fusion
    if fu.anchor not in selected:
        raise PlanError(f"anchor {getattr(fu.anchor, 'value', fu.anchor)!r} not in streams", "/fusion/anchor")
    if fu.tau is not None:
        if isinstance(fu.tau, bool) or not isinstance(fu.tau, (int, float)):
            raise PlanError("tau must be a number", "/fusion/tau")
        if not math.isfinite(fu.tau) or fu.tau <= 0:
            raise PlanError("tau must be positive and finite", "/fusion/tau")

    fields_ = plan.output.return_fields
    if not fields_:
        raise PlanError("return_fields must be non-empty", "/output/return_fields")
    if len(set(fields_)) != len(fields_):
        raise PlanError("duplicate return field", "/output/return_fields")
    for i, name in enumerate(fields_):
        if name not in FIELD_SOURCES:
            raise PlanError(f"unknown return field {name!r}", f"/output/return_fields/{i}")
        if not selected.intersection(FIELD_SOURCES[name]):
            raise PlanError(f"return field {name!r} not resolvable from selected streams", f"/output/return_fields/{i}")
    check_answer_schema(plan.answer_schema)


def canonicalize(plan: RetrievalPlan) -> RetrievalPlan:
    """Anchor-first stream order, deduplicated fields, defaults made explicit."""
    anchor = plan.fusion.anchor
    rest = sorted((s for s in set(plan.streams) if s != anchor), key=lambda s: s.order)
    streams = (anchor, *rest)
    seen: dict[str, None] = {}
    for name in plan.output.return_fields:
        seen.setdefault(name, None)
    filters = plan.filters
    if filters.event_labels is not None and filters.event_score_min is None:
        filters = replace(filters, event_score_min=DEFAULT_EVENT_SCORE_MIN)
    if filters.event_score_min is not None:
        filters = replace(filters, event_score_min=float(filters.event_score_min))
    return replace(
        plan,
        streams=streams,
        filters=filters,
        fusion=FusionSpec(anchor, float(plan.fusion.effective_tau)),
        output=OutputSpec(tuple(seen)),
    )


# --- interchange ------------------------------------------------------------

_TOP_KEYS = ("streams", "filters", "fusion", "output", "answer_schema")
_FILTER_KEYS = ("text", "speaker", "emotion_labels", "event_labels", "event_score_min", "time_window")


def _only_keys(doc: dict, allowed: set[str] | tuple[str, ...], path: str) -> None:
    for key in doc:
        if key not in allowed:
            raise PlanError(f"unknown key {key!r}", f"{path}/{key}")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PlanError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise PlanError("number must be finite", path)
    return float(value)


def _string_list(value: Any, path: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise PlanError("expected a list of strings", path)
    for i, v in enumerate(value):
        if not isinstance(v, str):
            raise PlanError(f"expected a string, got {v!r}", f"{path}/{i}")
    return tuple(value)


def plan_from_dict(doc: Any) -> RetrievalPlan:
    if not isinstance(doc, dict):
        raise PlanError("plan must be a JSON object")
    _only_keys(doc, _TOP_KEYS, "")
    for key in ("streams", "fusion", "output", "answer_schema"):
        if key not in doc:
            raise PlanError(f"missing required key {key!r}", f"/{key}")

    raw_streams = doc["streams"]
    if not isinstance(raw_streams, list):
        raise PlanError("streams must be a list", "/streams")
    streams = tuple(stream_from_name(s, f"/streams/{i}") for i, s in enumerate(raw_streams))

    raw_filters = doc.get("filters", {})
    if not isinstance(raw_filters, dict):
        raise PlanError("filters must be an object", "/filters")
    _only_keys(raw_filters, _FILTER_KEYS, "/filters")
    kw: dict[str, Any] = {}
    for name in ("text", "speaker"):
        if name in raw_filters:
            if not isinstance(raw_filters[name], str):
                raise PlanError(f"{name} must be a string", f"/filters/{name}")
            kw[name] = raw_filters[name]
    for name in ("emotion_labels", "event_labels"):
        if name in raw_filters:
            kw[name] = _string_list(raw_filters[name], f"/filters/{name}")
    if "event_score_min" in raw_filters:
        kw["event_score_min"] = _number(raw_filters["event_score_min"], "/filters/event_score_min")
    if "time_window" in raw_filters:
        tw = raw_filters["time_window"]
        path = "/filters/time_window"
        if not isinstance(tw, dict):
            raise PlanError("time_window must be an object {start, end}", path)
        _only_keys(tw, ("start", "end"), path)
        if "start" not in tw or "end" not in tw:
            raise PlanError("time_window needs start and end", path)
        start, end = _number(tw["start"], f"{path}/start"), _number(tw["end"], f"{path}/end")
        if start < 0 or end < 0 or start > end:
            raise PlanError(f"invalid window [{start}, {end}]", path)
        kw["time_window"] = TimeSpan(start, end)
    filters = FilterSet(**kw)

    raw_fusion = doc["fusion"]
    if not isinstance(raw_fusion, dict):
        raise PlanError("fusion must be an object", "/fusion")
    _only_keys(raw_fusion, ("anchor", "tau"), "/fusion")
    if "anchor" not in raw_fusion:
        raise PlanError("missing anchor", "/fusion/anchor")
    anchor = stream_from_name(raw_fusion["anchor"], "/fusion/anchor")
    tau = _number(raw_fusion["tau"], "/fusion/tau") if "tau" in raw_fusion else None
    fusion = FusionSpec(anchor, tau)

    raw_output = doc["output"]
    if not isinstance(raw_output, dict):
        raise PlanError("output must be an object", "/output")
    _only_keys(raw_output, ("return_fields",), "/output")
    if "return_fields" not in raw_output:
        raise PlanError("missing return_fields", "/output/return_fields")
    output = OutputSpec(_string_list(raw_output["return_fields"], "/output/return_fields"))

    schema = answer_schema_from_json(doc["answer_schema"])
    plan = RetrievalPlan(streams=streams, fusion=fusion, output=output, answer_schema=schema, filters=filters)
    validate_plan(plan)
    return plan


def parse_plan(document: str | bytes) -> RetrievalPlan:
    """Decode and validate a plan document. Raises :class:`PlanError`."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PlanError(f"not UTF-8: {exc.reason}", position=exc.start) from None
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PlanError(f"malformed JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", position=exc.pos) from None
    return plan_from_dict(doc)


def plan_to_dict(plan: RetrievalPlan) -> dict[str, Any]:
    plan = canonicalize(plan)
    f = plan.filters
    filters: dict[str, Any] = {}
    if f.text is not None:
        filters["text"] = f.text
    if f.speaker is not None:
        filters["speaker"] = f.speaker
    if f.emotion_labels is not None:
        filters["emotion_labels"] = list(f.emotion_labels)
    if f.event_labels is not None:
        filters["event_labels"] = list(f.event_labels)
    if f.event_score_min is not None:
        filters["event_score_min"] = f.event_score_min
    if f.time_window is not None:
        filters["time_window"] = {"start": f.time_window.start, "end": f.time_window.end}
    return {
        "streams": [s.value for s in plan.streams],
        "filters": filters,
        "fusion": {"anchor": plan.fusion.anchor.value, "tau": plan.fusion.tau},
        "output": {"return_fields": list(plan.output.return_fields)},
        "answer_schema": answer_schema_to_json(plan.answer_schema),
    }


def serialize_plan(plan: RetrievalPlan) -> str:
    """Canonical, byte-stable JSON text for ``plan``."""
    return json.dumps(plan_to_dict(plan), indent=2, ensure_ascii=False) + "\n"


def plan_json_schema() -> dict[str, Any]:
    """JSON schema of the interchange document, for prompting remote planners."""
    streams = [s.value for s in STREAM_ORDER]
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["streams", "fusion", "output", "answer_schema"],
        "properties": {
            "streams": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"enum": streams}},
            "filters": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "text": {"type": "string", "minLength": 1},
                    "speaker": {"type": "string", "minLength": 1},
                    "emotion_labels": {"type": "array", "items": {"type": "string"}},
                    "event_labels": {"type": "array", "items": {"type": "string"}},
                    "event_score_min": {"type": "number", "minimum": 0, "maximum": 1},
                    "time_window": {
                        "type": "object",
                        "required": ["start", "end"],
                        "properties": {"start": {"type": "number"}, "end": {"type": "number"}},
                    },
                },
            },
            "fusion": {
                "type": "object",
                "required": ["anchor"],
                "properties": {"anchor": {"enum": streams}, "tau": {"type": "number", "exclusiveMinimum": 0}},
            },
            "output": {
                "type": "object",
                "required": ["return_fields"],
                "properties": {
                    "return_fields": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"enum": list(RETURN_FIELDS)}}
                },
            },
            "answer_schema": {"type": "object"},
        },
    }
