from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audioplan.predicates import Conjunction, Keyword, LabelIn, SpeakerEquals, WindowOverlap
from audioplan.store import Record, RecordingDatabase, StoreError, StreamKind, TimeSpan, overlap_candidates

from oracles import random_database

T, S, E, V = StreamKind.TRANSCRIPT, StreamKind.SPEAKER, StreamKind.EMOTION, StreamKind.SOUND_EVENT


def test_insert_table_records():
    db = RecordingDatabase("rec1", 60)
    db.insert_record(T, Record.transcript(20.50, 22.10, "He talks about it"))
    db.insert_record(S, Record.speaker(20.50, 22.10, "SPEAKER_07"))
    db.insert_record(V, Record.scored(22.00, 27.00, [("Speech", 0.87)]))
    db.finalize()
    assert db.scan(T)[0].text == "He talks about it"
    assert db.scan(S)[0].label == "SPEAKER_07"
    assert db.scan(V)[0].top.score == 0.87


def test_reversed_span_rejected():
    with pytest.raises(StoreError):
        Record.transcript(5.0, 3.0, "x")


def test_span_beyond_duration_rejected():
    db = RecordingDatabase("r", 10)
    with pytest.raises(StoreError):
        db.insert_record(S, Record.speaker(9, 11, "A"))


def test_payload_must_fit_stream():
    db = RecordingDatabase("r", 10)
    with pytest.raises(StoreError):
        db.insert_record(S, Record.transcript(0, 1, "x"))


def test_finalize_sorts():
    db = RecordingDatabase("r", 100)
    db.insert_record(S, Record.speaker(30, 31, "A"))
    db.insert_record(S, Record.speaker(10, 11, "B"))
    db.finalize()
    assert [r.span for r in db.scan(S)] == [TimeSpan(10, 11), TimeSpan(30, 31)]


def test_boundary_mismatch_rejected():
    db = RecordingDatabase("r", 10)
    db.insert_record(T, Record.transcript(0, 5, "x"))
    db.insert_record(S, Record.speaker(0, 4, "A"))
    with pytest.raises(StoreError, match="shared-boundary"):
        db.finalize()


def test_empty_db_finalizes():
    db = RecordingDatabase("r", 0).finalize()
    assert all(db.scan(k) == [] for k in StreamKind)


def test_insert_after_finalize_rejected():
    db = RecordingDatabase("r", 10).finalize()
    with pytest.raises(StoreError):
        db.insert_record(S, Record.speaker(0, 1, "A"))


def test_spans_snap_to_milliseconds():
    assert TimeSpan(1.00049, 2.0006) == TimeSpan(1.0, 2.001)


def _db_with(kind, recs, duration=1000):
    db = RecordingDatabase("r", duration)
    for r in recs:
        db.insert_record(kind, r)
    return db.finalize()


def test_keyword_scan():
    db = _db_with(T, [Record.transcript(0, 1, "talks about employment law"), Record.transcript(2, 3, "weather report")])
    assert [r.text for r in db.scan(T, Keyword("employment"))] == ["talks about employment law"]
    assert len(db.scan(T, Keyword("EMPLOYMENT"))) == 1


def test_speaker_scan_no_match():
    db = _db_with(S, [Record.speaker(0, 1, "SPEAKER_00")])
    assert db.scan(S, SpeakerEquals("SPEAKER_02")) == []


def test_window_includes_straddling_record():
    db = _db_with(S, [Record.speaker(299, 301, "A"), Record.speaker(600, 610, "B"), Record.speaker(100, 300, "C")])
    got = db.scan(S, WindowOverlap(TimeSpan(300, 600)))
    assert [r.label for r in got] == ["A"]


def test_predicate_applicability_checked():
    db = _db_with(S, [Record.speaker(0, 1, "A")])
    with pytest.raises(StoreError):
        db.scan(S, Keyword("x"))


def test_overlap_candidates_table_spans():
    db = _db_with(V, [Record.scored(22.00, 27.00, [("Speech", 0.87)])])
    assert len(db.overlap_candidates(V, TimeSpan(20.50, 22.10), 2.5)) == 1


def test_overlap_candidates_far_target():
    db = _db_with(S, [Record.speaker(10, 11, "A")])
    assert db.overlap_candidates(S, TimeSpan(0, 1), 2.5) == []


def test_overlap_candidates_shared_endpoint():
    db = _db_with(S, [Record.speaker(1, 2, "A")])
    assert len(db.overlap_candidates(S, TimeSpan(0, 1), 0)) == 1


def test_negative_tau_rejected():
    with pytest.raises(StoreError):
        overlap_candidates([], TimeSpan(0, 1), -0.1)


# --- properties ----------------------------------------------------------------------

seeds = st.integers(0, 10**6)
taus = st.sampled_from([0.0, 0.001, 0.5, 2.5, 10.0])


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_scan_sorted(seed):
    db = random_database(random.Random(seed), max_records=30)
    for kind in StreamKind:
        keys = [r.sort_key() for r in db.scan(kind)]
        assert keys == sorted(keys)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0, 120), st.floats(0, 5))
def test_tau_zero_is_intersection(seed, a, width):
    db = random_database(random.Random(seed), max_records=30)
    anchor = TimeSpan(a, a + width)
    for kind in StreamKind:
        expected = [r for r in db.scan(kind) if r.span.intersects(anchor)]
        assert db.overlap_candidates(kind, anchor, 0.0) == expected


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0, 120), taus, taus)
def test_candidates_monotone_in_tau(seed, a, t1, t2):
    lo, hi = sorted((t1, t2))
    db = random_database(random.Random(seed), max_records=30)
    anchor = TimeSpan(a, a + 1)
    for kind in StreamKind:
        small = db.overlap_candidates(kind, anchor, lo)
        big = db.overlap_candidates(kind, anchor, hi)
        assert all(any(r is b for b in big) for r in small)


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(["employment", "river", "e"]), st.floats(0, 110))
def test_conjunction_is_intersection(seed, word, w):
    db = random_database(random.Random(seed), max_records=30)
    a, b = Keyword(word), WindowOverlap(TimeSpan(w, w + 10))
    both = db.scan(T, Conjunction((a, b)))
    ids_b = {id(r) for r in db.scan(T, b)}
    assert both == [r for r in db.scan(T, a) if id(r) in ids_b]
    lab1, lab2 = LabelIn(("Music", "Dog"), 0.5), WindowOverlap(TimeSpan(w, w + 10))
    ids = {id(r) for r in db.scan(V, lab2)}
    assert db.scan(V, Conjunction((lab1, lab2))) == [r for r in db.scan(V, lab1) if id(r) in ids]
