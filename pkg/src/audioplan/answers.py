"""Answer-schema enforcement for generator output.

Raw generator text is parsed strictly against the plan's answer schema.
Anything that does not conform becomes a parse failure; nothing is repaired.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

from .plan import (
    ABSTAIN_REPLY,
    Abstainable,
    AnswerSchema,
    EnumChoice,
    FreeText,
    IntegerAnswer,
    LabelList,
    Ordering,
    SpanList,
)


class AnswerParseError(ValueError):
    pass


@dataclass(frozen=True)
class Answer:
    raw: str
    parsed: Any = None
    parse_failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.parse_failure is None


def _load_object(raw: str, key: str) -> Any:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AnswerParseError(f"not JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or set(doc) != {key}:
        raise AnswerParseError(f"expected an object with the single key {key!r}")
    return doc[key]


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def parse_answer(raw: str, schema: AnswerSchema) -> Any:
    """Parsed value of ``raw`` under ``schema``; raises :class:`AnswerParseError`."""
    if isinstance(schema, Abstainable):
        if raw.strip() == ABSTAIN_REPLY:
            return ABSTAIN_REPLY
        return parse_answer(raw, schema.inner)
    if isinstance(schema, FreeText):
        text = raw.strip()
        if text.startswith("{"):
            value = _load_object(text, "answer")
            if not isinstance(value, str):
                raise AnswerParseError("answer must be a string")
            text = value.strip()
        if not text:
            raise AnswerParseError("empty answer")
        return text
    if isinstance(schema, EnumChoice):
        value = _load_object(raw, "answer")
        if value not in schema.values:
            raise AnswerParseError(f"{value!r} not one of {list(schema.values)}")
        return value
    if isinstance(schema, IntegerAnswer):
        value = _load_object(raw, "answer")
        if isinstance(value, bool) or not isinstance(value, int):
            raise AnswerParseError(f"expected an integer, got {value!r}")
        return value
    if isinstance(schema, SpanList):
        value = _load_object(raw, "segments")
        if not isinstance(value, list):
            raise AnswerParseError("segments must be a list")
        out = []
        for item in value:
            if not isinstance(item, dict) or set(item) != {"start", "end", "label"}:
                raise AnswerParseError("each segment needs exactly start, end, label")
            start, end, label = item["start"], item["end"], item["label"]
            if not (_is_number(start) and _is_number(end)) or start > end or start < 0:
                raise AnswerParseError(f"bad segment bounds {start!r}, {end!r}")
            if not isinstance(label, str) or not label:
                raise AnswerParseError("segment label must be a non-empty string")
            out.append((float(start), float(end), label))
        return tuple(out)
    if isinstance(schema, LabelList):
        value = _load_object(raw, "labels")
        if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
            raise AnswerParseError("labels must be a list of non-empty strings")
        return tuple(value)
    if isinstance(schema, Ordering):
        value = _load_object(raw, "order")
        if (
            not isinstance(value, list)
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)
            or sorted(value) != list(range(1, schema.n + 1))
        ):
            raise AnswerParseError(f"order must be a permutation of 1..{schema.n}")
        return tuple(value)
    raise AnswerParseError(f"unsupported schema {schema!r}")


def to_answer(raw: str, schema: AnswerSchema) -> Answer:
    try:
        return Answer(raw, parse_answer(raw, schema))
    except AnswerParseError as exc:
        return Answer(raw, None, str(exc))


def render_answer(value: Any, schema: AnswerSchema) -> str:
    """Inverse of :func:`parse_answer` for well-formed values."""
    if isinstance(schema, Abstainable):
        if value == ABSTAIN_REPLY:
            return ABSTAIN_REPLY
        return render_answer(value, schema.inner)
    if isinstance(schema, FreeText):
        return json.dumps({"answer": value}, ensure_ascii=False)
    if isinstance(schema, (EnumChoice, IntegerAnswer)):
        return json.dumps({"answer": value}, ensure_ascii=False)
    if isinstance(schema, SpanList):
        segs = [{"start": s, "end": e, "label": l} for s, e, l in value]
        return json.dumps({"segments": segs}, ensure_ascii=False)
    if isinstance(schema, LabelList):
        return json.dumps({"labels": list(value)}, ensure_ascii=False)
    if isinstance(schema, Ordering):
        return json.dumps({"order": list(value)})
    raise AnswerParseError(f"unsupported schema {schema!r}")
