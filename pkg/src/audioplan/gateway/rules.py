"""Deterministic planner and generator used for oracle runs.

``RuleTemplatePlanner`` recognises the task query templates with anchored
patterns. Anything it does not recognise becomes a transcript keyword plan.
``ExtractiveGenerator`` answers from retrieved rows alone: counting distinct
labels, sorting by onset, copying spans, or returning the retrieved text.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Any

from ..answers import Answer, render_answer, to_answer
from ..executor import RetrievedSegments
from ..plan import (
    ABSTAIN_REPLY,
    Abstainable,
    AnswerSchema,
    EnumChoice,
    FilterSet,
    FreeText,
    FusionSpec,
    IntegerAnswer,
    LabelList,
    Ordering,
    OutputSpec,
    RetrievalPlan,
    SpanList,
    canonicalize,
    validate_plan,
)
from ..store import StreamKind, TimeSpan
from .base import QueryRequest

NO_EVIDENCE = "No relevant evidence was retrieved."

STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because been before being
    below between both but by can could did do does doing down during each few for from further
    had has have having he her here hers herself him himself his how i if in into is it its itself
    just me more most my myself no nor not now of off on once only or other our ours ourselves out
    over own same she should so some such than that the their theirs them themselves then there
    these they this those through to too under until up very was we were what when where which
    while who whom why will with would you your yours yourself yourselves say says said tell
    given context answer following question short sentence option letter one choose choosing
    """.split()
)

_NUM = r"(\d+(?:\.\d+)?)"
_WS = re.compile(r"\s+")
_WORD = re.compile(r"[A-Za-z0-9']+")

_COUNT = re.compile(rf"count the number of speakers starting from {_NUM} sec to {_NUM} sec", re.I)
_DIAR = re.compile(
    rf"perform speaker diarization (?:for the provided audio segment spanning |between ){_NUM} (?:to|and) {_NUM} seconds",
    re.I,
)
_SUMM = re.compile(
    rf"(?:work on summarization starting from {_NUM} sec to {_NUM} sec"
    rf"|summary of the meeting segment between {_NUM} and {_NUM} seconds)",
    re.I,
)
_EMO = re.compile(rf"analyze the audio between {_NUM} and {_NUM} seconds and respond with the emotion", re.I)
_SED = re.compile(r"detect occurrences of the following sound event label\(s\):\s*(.+?)(?:\s+in the audio clip|\.?\s*$)", re.I)
_ORDER = re.compile(r"determine the (?:correct chronological )?order", re.I)
_ORDER_WINDOW = re.compile(rf"\({_NUM} to {_NUM} seconds\)", re.I)
_LISTED = re.compile(r"\((\d+)\)\s*")
_SCQA = re.compile(r"you should work on the utterance from speaker\s+([^\s.]+(?:\.[^\s.]+)*)\.", re.I)
_OPTION = re.compile(r"(?:^|(?<=\s))([A-H])\)\s+")
_QA_PREFIX = re.compile(r"given the context, answer the following question[^:\n]*:\s*", re.I)


def _flat(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _window(a: str, b: str) -> TimeSpan:
    return TimeSpan(float(a), float(b))


def parse_options(question: str) -> list[tuple[str, str]]:
    """``[(letter, option text), ...]`` from the first line containing ``A) ``."""
    for line in question.splitlines():
        parts = _OPTION.split(line)
        if len(parts) >= 3 and parts[1] == "A":
            letters, texts = parts[1::2], parts[2::2]
            return [(l, t.strip()) for l, t in zip(letters, texts)]
    return []


def question_body(question: str) -> str:
    """The free-text question, without template boilerplate and options."""
    m = _QA_PREFIX.search(question)
    body = question[m.end():] if m else question
    body = body.split("\n\n")[0] if m else body
    for line in body.splitlines():
        if _OPTION.search(line):
            body = _OPTION.split(line)[0]
            break
    return _flat(body)


def content_words(text: str) -> list[str]:
    return [w for w in (t.lower().strip("'") for t in _WORD.findall(text)) if len(w) >= 3 and w not in STOPWORDS]


def pick_keyword(text: str) -> str | None:
    """Longest content word; the earliest wins a tie."""
    words = content_words(text)
    if not words:
        return None
    return max(words, key=len)


def listed_labels(question: str) -> list[str]:
    """Labels enumerated as ``(1) a (2) b ...`` on one line or one per line."""
    marks = list(_LISTED.finditer(question))
    out = []
    for i, m in enumerate(marks):
        stop = marks[i + 1].start() if i + 1 < len(marks) else len(question)
        chunk = question[m.end():stop].split("\n")[0]
        chunk = re.split(r"\s+Determine\b", chunk)[0]
        out.append(chunk.strip().rstrip(".;,").strip())
    return out


def _plan(streams, anchor, fields, schema, **filters) -> RetrievalPlan:
    plan = RetrievalPlan(
        streams=tuple(streams),
        fusion=FusionSpec(anchor),
        output=OutputSpec(tuple(fields)),
        answer_schema=schema,
        filters=FilterSet(**filters),
    )
    validate_plan(plan)
    return canonicalize(plan)


class RuleTemplatePlanner:
    """Maps templated questions to plans; pure and deterministic."""

    def __init__(self, tau: float | None = None):
        self.tau = tau

    def plan(self, request: QueryRequest) -> RetrievalPlan:
        plan = self._match(request.question)
        if self.tau is not None:
            plan = canonicalize(
                RetrievalPlan(plan.streams, FusionSpec(plan.fusion.anchor, self.tau), plan.output, plan.answer_schema, plan.filters)
            )
        return plan

    def _match(self, question: str) -> RetrievalPlan:
        flat = _flat(question)
        T, S, E, V = StreamKind.TRANSCRIPT, StreamKind.SPEAKER, StreamKind.EMOTION, StreamKind.SOUND_EVENT

        if m := _SCQA.search(flat):
            options = parse_options(question)
            inner: AnswerSchema = EnumChoice(tuple(l for l, _ in options)) if options else FreeText()
            rest = question.split("## Question", 1)[1] if "## Question" in question else flat[m.end():]
            kw = pick_keyword(question_body(rest))
            extra = {"text": kw} if kw else {}
            return _plan([T, S], T, ["start", "end", "speaker", "text"], Abstainable(inner), speaker=m.group(1), **extra)
        if m := _COUNT.search(flat):
            return _plan([S], S, ["start", "end", "speaker"], IntegerAnswer(), time_window=_window(*m.groups()))
        if m := _DIAR.search(flat):
            return _plan([S], S, ["start", "end", "speaker"], SpanList(), time_window=_window(*m.groups()))
        if m := _SUMM.search(flat):
            a, b = [g for g in m.groups() if g is not None]
            return _plan([T], T, ["start", "end", "text"], FreeText(), time_window=_window(a, b))
        if m := _EMO.search(flat):
            return _plan([E], E, ["start", "end", "emotion"], LabelList(), time_window=_window(*m.groups()))
        if _ORDER.search(flat) and (labels := listed_labels(question)) and len(labels) >= 2:
            extra = {}
            if w := _ORDER_WINDOW.search(flat):
                extra["time_window"] = _window(*w.groups())
            return _plan([V], V, ["start", "end", "event", "score"], Ordering(len(labels)), event_labels=tuple(dict.fromkeys(labels)), **extra)
        if m := _SED.search(flat):
            labels = tuple(dict.fromkeys(l.strip() for l in m.group(1).split(";") if l.strip()))
            return _plan([V], V, ["start", "end", "event", "score"], SpanList(), event_labels=labels)

        options = parse_options(question)
        schema: AnswerSchema = EnumChoice(tuple(l for l, _ in options)) if options else FreeText()
        kw = pick_keyword(question_body(question))
        extra = {"text": kw} if kw else {}
        return _plan([T], T, ["start", "end", "text"], schema, **extra)


def _tokens(text: str) -> set[str]:
    return set(content_words(text))


class ExtractiveGenerator:
    """Schema-conforming answers computed from retrieved rows only."""

    def generate(self, question: str, context: RetrievedSegments, schema: AnswerSchema) -> Answer:
        return to_answer(render_answer(self._value(question, context, schema), schema), schema)

    def _value(self, question: str, context: RetrievedSegments, schema: AnswerSchema) -> Any:
        rows = context.rows
        if isinstance(schema, Abstainable):
            if not rows:
                return ABSTAIN_REPLY
            schema = schema.inner
        if isinstance(schema, IntegerAnswer):
            return len({r.values.get("speaker") for r in rows if r.values.get("speaker") is not None})
        if isinstance(schema, Ordering):
            return self._order(question, rows, schema.n)
        if isinstance(schema, SpanList):
            segs = []
            for r in rows:
                label = r.values.get("speaker") or r.values.get("event")
                if label is None:
                    continue
                segs.append((r.anchor_span.start, r.anchor_span.end, str(label)))
            return segs
        if isinstance(schema, LabelList):
            weight: Counter[str] = Counter()
            for r in rows:
                label = r.values.get("emotion") or r.values.get("event")
                if label is not None:
                    weight[str(label)] += max(r.anchor_span.duration, 1e-3)
            if not weight:
                return []
            # Counter.most_common keeps first-seen order among equal weights.
            return [weight.most_common(1)[0][0]]
        if isinstance(schema, EnumChoice):
            return self._choose(question, rows, schema.values)
        text = " ".join(str(r.values["text"]) for r in rows if r.values.get("text"))
        return text or NO_EVIDENCE

    @staticmethod
    def _order(question: str, rows, n: int) -> list[int]:
        labels = listed_labels(question)[:n]
        first: dict[int, float] = {}
        for r in rows:
            label = r.values.get("event")
            for i, name in enumerate(labels, 1):
                if label == name and i not in first:
                    first[i] = r.anchor_span.start
        seen = sorted(first, key=lambda i: (first[i], i))
        return seen + [i for i in range(1, n + 1) if i not in first]

    @staticmethod
    def _choose(question: str, rows, values: tuple[str, ...]) -> str:
        options = dict(parse_options(question))
        evidence = _tokens(" ".join(str(r.values.get("text") or "") for r in rows))
        best, best_score = values[0], -1
        for v in values:
            score = len(_tokens(options.get(v, "")) & evidence)
            if score > best_score:
                best, best_score = v, score
        return best
