from __future__ import annotations

import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audioplan import templates
from audioplan.compiler import compile_plan
from audioplan.executor import FusedRow, RetrievedSegments, serialize_context
from audioplan.gateway import (
    ChatClient,
    ExtractiveGenerator,
    GeneratorUnavailable,
    PlanInvalidAfterRetries,
    PlannerUnavailable,
    QueryRequest,
    RemoteConfig,
    RemoteLLMGenerator,
    RemoteLLMPlanner,
    RuleTemplatePlanner,
    StageError,
    run_pipeline,
)
from audioplan.gateway.rules import pick_keyword
from audioplan.plan import (
    ABSTAIN_REPLY,
    Abstainable,
    EnumChoice,
    FreeText,
    IntegerAnswer,
    LabelList,
    Ordering,
    OutputSpec,
    SpanList,
    serialize_plan,
    validate_plan,
)
from audioplan.store import Record, RecordingDatabase, StreamKind, TimeSpan

from oracles import EMPLOYMENT_PLAN

T, S, E, V = StreamKind.TRANSCRIPT, StreamKind.SPEAKER, StreamKind.EMOTION, StreamKind.SOUND_EVENT
planner = RuleTemplatePlanner()


def _plan(question: str):
    return planner.plan(QueryRequest(question, "r"))


# --- rule planner --------------------------------------------------------------------


def test_speaker_count_template():
    plan = _plan("You should count the number of speakers starting from 300 sec to 600 sec.")
    assert plan.streams == (S,)
    assert plan.filters.time_window == TimeSpan(300, 600)
    assert plan.output.return_fields == ("start", "end", "speaker")
    assert plan.answer_schema == IntegerAnswer()


def test_sed_template():
    plan = _plan("Detect occurrences of the following sound event label(s): Flamenco")
    assert plan.streams == (V,)
    assert plan.filters.event_labels == ("Flamenco",)
    assert plan.output.return_fields == ("start", "end", "event", "score")
    assert plan.answer_schema == SpanList()


def test_speaker_constrained_template():
    q = (
        "You should work on the utterance from speaker 439. If you cannot answer the question from the given "
        "speaker, just reply \"This question is not answerable.\" What did the chef cook? A) soup B) bread C) fish D) rice"
    )
    plan = _plan(q)
    assert plan.streams == (T, S)
    assert plan.filters.speaker == "439"
    assert plan.fusion.anchor is T
    assert plan.answer_schema == Abstainable(EnumChoice(("A", "B", "C", "D")))


@pytest.mark.parametrize(
    "question, schema",
    [
        (templates.qa1("What did Veravaken repair?"), FreeText()),
        (templates.mcqa("What did Veravaken repair?", ["a kite", "a bell", "a cup", "a rug"]), EnumChoice(("A", "B", "C", "D"))),
        (templates.summarization(0, 300), FreeText()),
        (templates.diarization(0, 300), SpanList()),
        (templates.emotion(10, 20.5), LabelList()),
        (templates.sed(["Dog", "Church bell"]), SpanList()),
        (templates.speaker_count(300, 600), IntegerAnswer()),
        (templates.event_ordering(["Music", "Bird flight", "Change ringing"], 0, 600), Ordering(3)),
        (
            templates.speaker_constrained_qa("SPEAKER_03", "What did Veravaken repair?", ["a kite", "a bell", "a cup", "a rug"]),
            Abstainable(EnumChoice(("A", "B", "C", "D"))),
        ),
    ],
)
def test_every_template_yields_valid_plan(question, schema):
    plan = _plan(question)
    validate_plan(plan)
    assert plan.answer_schema == schema
    compile_plan(plan)


def test_keyword_is_longest_content_word():
    assert pick_keyword("What did Veravaken repair?") == "veravaken"
    assert pick_keyword("what is it") is None


def test_tau_override():
    assert RuleTemplatePlanner(tau=0.5).plan(QueryRequest("x y employment", "r")).fusion.tau == 0.5


def test_planner_is_pure():
    q = templates.event_ordering(["Music", "Dog", "Siren"], 0, 600)
    assert serialize_plan(_plan(q)) == serialize_plan(_plan(q))


# --- extractive generator ------------------------------------------------------------


def _segments(rows: list[dict], fields: tuple[str, ...]) -> RetrievedSegments:
    fused = [FusedRow(TimeSpan(r["start"], r["end"]), r) for r in rows]
    text, size = serialize_context(fused, OutputSpec(fields))
    return RetrievedSegments(tuple(fused), OutputSpec(fields), text, size)


gen = ExtractiveGenerator()


def test_distinct_speaker_count():
    rows = [{"start": i, "end": i + 1, "speaker": s} for i, s in enumerate(["S1", "S2", "S1", "S3"])]
    answer = gen.generate("count", _segments(rows, ("start", "end", "speaker")), IntegerAnswer())
    assert answer.parsed == 3


def test_order_by_onset():
    q = templates.event_ordering(["Music", "Bird flight", "Change ringing"], 0, 900)
    rows = [
        {"start": 40, "end": 45, "event": "Bird flight"},
        {"start": 100, "end": 110, "event": "Music"},
        {"start": 700, "end": 705, "event": "Change ringing"},
    ]
    answer = gen.generate(q, _segments(rows, ("start", "end", "event")), Ordering(3))
    assert answer.parsed == (2, 1, 3)


def test_abstains_on_empty_context():
    answer = gen.generate("q", _segments([], ("start", "text")), Abstainable(EnumChoice(("A", "B"))))
    assert answer.parsed == ABSTAIN_REPLY


def test_mcqa_token_overlap():
    q = templates.mcqa("What did Veravaken repair?", ["the paper kite", "an oak bookshelf", "a copper bell", "a velvet curtain"])
    rows = [{"start": 0, "end": 3, "text": "Veravaken repaired an oak bookshelf near the market."}]
    assert gen.generate(q, _segments(rows, ("start", "end", "text")), EnumChoice(("A", "B", "C", "D"))).parsed == "B"


row_values = st.fixed_dictionaries(
    {
        "start": st.integers(0, 1000).map(float),
        "speaker": st.one_of(st.none(), st.sampled_from(["S1", "S2"])),
        "text": st.one_of(st.none(), st.text(max_size=20)),
        "event": st.one_of(st.none(), st.sampled_from(["Music", "Dog"])),
        "emotion": st.one_of(st.none(), st.sampled_from(["happy", "sad"])),
    }
)
schemas = st.sampled_from(
    [FreeText(), IntegerAnswer(), SpanList(), LabelList(), Ordering(2), Ordering(3), EnumChoice(("A", "B")),
     Abstainable(EnumChoice(("A", "B", "C", "D"))), Abstainable(FreeText())]
)


@settings(max_examples=300, deadline=None)
@given(st.lists(row_values, max_size=6), schemas, st.text(max_size=60))
def test_generator_never_violates_schema(rows, schema, question):
    rows = [dict(r, end=r["start"] + 1) for r in rows]
    answer = gen.generate(question or "q", _segments(rows, ("start", "end", "speaker", "text", "event", "emotion")), schema)
    assert answer.ok, answer.parse_failure


# --- pipeline ------------------------------------------------------------------------


def _oracle_db() -> RecordingDatabase:
    db = RecordingDatabase("r", 900)
    for i, spk in enumerate(["S1", "S2", "S3", "S1", "S2"]):
        s = 310 + i * 40
        db.insert_record(S, Record.speaker(s, s + 30, spk))
    db.insert_record(S, Record.speaker(700, 720, "S4"))
    return db.finalize()


def test_pipeline_counts_speakers_in_window():
    db = _oracle_db()
    q = "You should count the number of speakers starting from 300 sec to 600 sec."
    run = run_pipeline(QueryRequest.for_db(q, db), db, planner, gen)
    assert run.answer.parsed == 3
    assert run.trace.sql.startswith("WITH") and run.trace.row_count == 5


class _BrokenPlanner:
    def plan(self, request):
        raise PlanInvalidAfterRetries("no valid plan after 3 attempts")


def test_pipeline_tags_failed_stage():
    db = _oracle_db()
    with pytest.raises(StageError) as info:
        run_pipeline(QueryRequest.for_db("q", db), db, _BrokenPlanner(), gen)
    assert info.value.stage == "plan"
    assert info.value.trace.failed_stage == "plan"


# --- remote backends -----------------------------------------------------------------


def _reply(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _client(handler, **kw) -> ChatClient:
    cfg = RemoteConfig(endpoint="http://llm.test/v1", model="m", api_key="sk-secret", **kw)
    return ChatClient(cfg, transport=httpx.MockTransport(handler))


def test_remote_planner_reprompts_invalid_plan():
    calls = []

    def handler(request):
        body = json.loads(request.content)
        calls.append(body)
        assert request.headers["Authorization"] == "Bearer sk-secret"
        assert body["response_format"]["type"] == "json_schema"
        return _reply('{"streams": ["video"]}' if len(calls) == 1 else EMPLOYMENT_PLAN)

    plan = RemoteLLMPlanner(_client(handler)).plan(QueryRequest("q", "r"))
    assert plan.filters.speaker == "SPEAKER_02"
    assert len(calls) == 2
    assert "invalid" in calls[1]["messages"][-1]["content"]


def test_remote_planner_gives_up_after_retries():
    n = []

    def handler(request):
        n.append(1)
        return _reply("not json")

    with pytest.raises(PlanInvalidAfterRetries):
        RemoteLLMPlanner(_client(handler, retries=3)).plan(QueryRequest("q", "r"))
    assert len(n) == 3


def test_remote_retries_server_errors():
    n = []

    def handler(request):
        n.append(1)
        return httpx.Response(503) if len(n) < 2 else _reply(EMPLOYMENT_PLAN)

    RemoteLLMPlanner(_client(handler, retries=3)).plan(QueryRequest("q", "r"))
    assert len(n) == 2


def test_remote_unavailable():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    with pytest.raises(PlannerUnavailable):
        RemoteLLMPlanner(_client(handler, retries=1)).plan(QueryRequest("q", "r"))
    with pytest.raises(GeneratorUnavailable):
        RemoteLLMGenerator(_client(handler, retries=1)).generate("q", _segments([], ("start",)), FreeText())


def test_remote_generator_out_of_enum_is_parse_failure():
    answer = RemoteLLMGenerator(_client(lambda r: _reply('{"answer": "E"}'))).generate(
        "q", _segments([], ("start",)), EnumChoice(("A", "B", "C", "D"))
    )
    assert not answer.ok and answer.raw == '{"answer": "E"}'


def test_api_key_redacted_in_logs():
    client = _client(lambda r: _reply("x"))
    assert "sk-secret" not in client._redacted({"k": "sk-secret"})
