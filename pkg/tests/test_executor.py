from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audioplan.compiler import compile_plan
from audioplan.executor import (
    FusedRow,
    estimate_tokens,
    execute,
    midpoint_distance,
    rows_to_csv,
    serialize_context,
    temporal_fuse,
)
from audioplan.plan import FilterSet, FusionSpec, OutputSpec, RetrievalPlan, parse_plan, plan_from_dict
from audioplan.store import Record, RecordingDatabase, StreamKind, TimeSpan

from oracles import EMPLOYMENT_PLAN, brute_force_rows, random_database, random_plan_dict

T, S, V = StreamKind.TRANSCRIPT, StreamKind.SPEAKER, StreamKind.SOUND_EVENT


def _employment_db(speaker: str = "SPEAKER_02") -> RecordingDatabase:
    db = RecordingDatabase("r", 700)
    for start, end, text, spk in [
        (100, 104, "we discussed employment policy", "SPEAKER_02"),
        (104, 110, "and the weather", "SPEAKER_01"),
    ]:
        db.insert_record(T, Record.transcript(start, end, text))
        db.insert_record(S, Record.speaker(start, end, spk))
    return db.finalize()


def test_employment_plan_single_row():
    out = execute(compile_plan(parse_plan(EMPLOYMENT_PLAN)), _employment_db())
    assert [r.values for r in out.rows] == [
        {"start": 100.0, "end": 104.0, "speaker": "SPEAKER_02", "text": "we discussed employment policy"}
    ]


def test_employment_plan_speaker_miss_drops_row():
    plan = parse_plan(EMPLOYMENT_PLAN.replace("SPEAKER_02", "SPEAKER_99"))
    out = execute(compile_plan(plan), _employment_db())
    assert out.rows == () and out.context_text == "" and out.context_size == 0


def test_window_scan_on_speaker():
    db = RecordingDatabase("r", 700)
    for s, e, l in [(250, 299, "A"), (290, 310, "B"), (400, 420, "A"), (599, 650, "C"), (600, 610, "D")]:
        db.insert_record(S, Record.speaker(s, e, l))
    db.finalize()
    plan = RetrievalPlan((S,), FusionSpec(S), OutputSpec(("start", "end", "speaker")), filters=FilterSet(time_window=TimeSpan(300, 600)))
    got = [r.values["speaker"] for r in execute(compile_plan(plan), db).rows]
    assert got == ["B", "A", "C"]


def test_table_span_fusion_distance():
    anchor = Record.transcript(20.50, 22.10, "He talks about it")
    event = Record.scored(22.00, 27.00, [("Speech", 0.87)])
    assert math.isclose(midpoint_distance(anchor.span, event.span), 3.20)
    assert temporal_fuse(anchor, [event], 2.5) is event


def test_unmatched_anchor_retained_with_null():
    db = RecordingDatabase("r", 20)
    db.insert_record(T, Record.transcript(0, 1, "hello"))
    db.insert_record(V, Record.scored(10, 11, [("Music", 0.9)]))
    db.finalize()
    plan = RetrievalPlan((T, V), FusionSpec(T), OutputSpec(("start", "text", "event")))
    out = execute(compile_plan(plan), db)
    assert [r.values for r in out.rows] == [{"start": 0.0, "text": "hello", "event": None}]
    assert out.context_text == "start=0.00\ttext=hello\tevent=null\n"


def test_equidistant_tie_goes_to_earlier_start():
    anchor = Record.speaker(10, 12, "A")
    early, late = Record.scored(8, 10, [("x", 1)]), Record.scored(12, 14, [("y", 1)])
    assert temporal_fuse(anchor, [late, early], 2.5) is early


def test_context_line_format():
    row = FusedRow(TimeSpan(20.5, 22.1), {"start": 20.5, "end": 22.1, "speaker": "SPEAKER_07", "text": "He talks about it"})
    text, size = serialize_context([row], OutputSpec(("start", "end", "speaker", "text")))
    assert text == "start=20.50\tend=22.10\tspeaker=SPEAKER_07\ttext=He talks about it\n"
    assert size == math.ceil(len(text.encode()) / 4)


def test_token_estimate():
    assert estimate_tokens("x" * 4000) == 1000
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcde") == 2


def test_csv_dump():
    out = execute(compile_plan(parse_plan(EMPLOYMENT_PLAN)), _employment_db())
    assert rows_to_csv(out).splitlines()[0] == "start,end,speaker,text"


# --- properties ----------------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.5, 2.5, 10.0]))
def test_matches_brute_force(seed, tau):
    rng = random.Random(seed)
    db = random_database(rng, max_records=25)
    doc = random_plan_dict(rng, tau)
    out = execute(compile_plan(plan_from_dict(doc)), db)
    assert [r.values for r in out.rows] == brute_force_rows(doc, db)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_execute_pure_and_one_row_per_anchor(seed):
    rng = random.Random(seed)
    db = random_database(rng, max_records=25)
    ir = compile_plan(plan_from_dict(random_plan_dict(rng)))
    a, b = execute(ir, db), execute(ir, db)
    assert a.context_text == b.context_text and a.rows == b.rows
    spans = [r.anchor_span for r in a.rows]
    anchors = [r.span for r in db.scan(ir.anchor.kind, ir.anchor.predicate)]
    # rows follow anchor order and never repeat an anchor
    it = iter(anchors)
    assert all(any(s == x for x in it) for s in spans)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 5), st.floats(0, 5))
def test_shrinking_tau_never_adds_matches(seed, t1, t2):
    rng = random.Random(seed)
    db = random_database(rng, max_records=25)
    lo, hi = sorted((t1, t2))
    for anchor in db.scan(T)[:10]:
        small = temporal_fuse(anchor, db.scan(V), lo)
        big = temporal_fuse(anchor, db.scan(V), hi)
        if small is not None:
            assert big is not None
            assert midpoint_distance(anchor.span, big.span) <= midpoint_distance(anchor.span, small.span)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_infinite_tau_is_global_nearest(seed):
    rng = random.Random(seed)
    db = random_database(rng, max_records=25)
    events = db.scan(V)
    for anchor in db.scan(T)[:10]:
        got = temporal_fuse(anchor, events, 1e9)
        if not events:
            assert got is None
            continue
        best = min(midpoint_distance(anchor.span, e.span) for e in events)
        assert midpoint_distance(anchor.span, got.span) == best


@pytest.mark.parametrize("minutes", [10, 60])
def test_rows_independent_of_padding(minutes):
    """Appending records far outside the fused window changes nothing."""
    db = RecordingDatabase("r", minutes * 60)
    db.insert_record(T, Record.transcript(100, 104, "employment talk"))
    db.insert_record(S, Record.speaker(100, 104, "SPEAKER_02"))
    for k in range(1, minutes):
        s = 200 + k * 50
        if s + 5 > minutes * 60:
            break
        db.insert_record(T, Record.transcript(s, s + 5, "filler"))
        db.insert_record(S, Record.speaker(s, s + 5, "SPEAKER_01"))
    db.finalize()
    out = execute(compile_plan(parse_plan(EMPLOYMENT_PLAN)), db)
    assert len(out.rows) == 1
