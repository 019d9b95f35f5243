"""Synthetic long-form benchmark corpora.

Recordings are concatenations of 10-minute sources. Each source has a seeded
Markov turn-taking process over a few speakers, filler utterances drawn from
a word pool, per-utterance emotion scores and a 10 s sliding-window event
tagger output. Needles are planted at recorded positions: one fact sentence
and one labelled sound event per 5 minutes of audio.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .. import templates
from ..plan import ABSTAIN_REPLY
from ..store import Record, TimeSpan
from .formats import ManifestEntry, SourceSegment, format_rttm, record_to_row, write_jsonl, write_manifest

DURATIONS_MIN = (10, 30, 60, 300, 540)
SOURCE_SECONDS = 600.0
BLOCK_SECONDS = 300.0
SUMMARY_WINDOW = 600.0
DIAR_WINDOW = 300.0
COUNT_WINDOW = 600.0
# Silence around fact utterances; must exceed the fusion tolerance (2.5 s).
FACT_GUARD = 3.0
EVENT_HOP = 10.0

FILLER_WORDS = """
about above across action agree almost always answer around asked budget called change
clear close coming common course decide design detail early enough every expect figure
final follow front going great group happen heard issue just keep large later least
level little local looking major matter maybe meeting member might minute model money
month moving never number often order other paper people period place plan point
power price quite rather ready really report right round second seems sense short
should simple small sound start still study sure system table taking thing think
though today together total under until using value watch whole within without work
would wrong year
""".split()

# Two-syllable pieces; names are four pieces long so they exceed every filler word.
_SYLLABLES = "ba be bo da de do ka ke ko la le lo ma me mo na ne no ra re ro sa se so ta te to va ve vo za ze zo".split()

VERBS = (
    ("carried", "carry"),
    ("painted", "paint"),
    ("repaired", "repair"),
    ("sold", "sell"),
    ("found", "find"),
    ("hid", "hide"),
    ("bought", "buy"),
    ("borrowed", "borrow"),
)
OBJECTS = (
    "a brass telescope", "the red lantern", "an oak bookshelf", "a silver kettle", "the torn map",
    "a wool blanket", "the iron anchor", "a glass vase", "the leather saddle", "a copper bell",
    "the marble statue", "a velvet curtain", "the wicker basket", "a bronze medal", "the cedar chest",
    "a porcelain doll", "the canvas tent", "a steel toolbox", "the paper kite", "a clay teapot",
)
PLACES = ("harbor", "market", "library", "station", "bridge", "garden", "chapel", "bakery")

EMOTIONS = ("Neutral", "Happy", "Sad", "Angry", "Surprise", "Fear", "Disgust", "Contempt")
_EMOTION_WEIGHTS = (6, 2, 1.5, 1.5, 1, 0.5, 0.5, 0.5)

EVENT_LABELS = (
    "Flamenco", "Music", "Bird flight, flapping wings", "Change ringing (campanology)", "Dog", "Siren",
    "Applause", "Thunder", "Church bell", "Car horn", "Glass breaking", "Whistle", "Train horn",
    "Laughter", "Baby cry, infant cry", "Doorbell", "Drum roll", "Typing", "Helicopter", "Cat",
    "Water tap, faucet", "Chainsaw", "Accordion", "Harmonica", "Rain", "Fireworks", "Cowbell",
    "Skateboard", "Sewing machine", "Telephone bell ringing", "Vacuum cleaner", "Footsteps",
    "Gunshot, gunfire", "Crowd", "Wind chime", "Bagpipes", "Steam whistle", "Rooster", "Frog", "Zipper",
)
BACKGROUND_LABEL = "Speech"


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class TaskInstance:
    instance_id: str
    task: str
    recording_id: str
    question: str
    ground_truth: Any
    window: TimeSpan | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "instance_id": self.instance_id,
            "task": self.task,
            "recording_id": self.recording_id,
            "question": self.question,
            "ground_truth": self.ground_truth,
        }
        if self.window is not None:
            doc["window"] = [self.window.start, self.window.end]
        if self.meta:
            doc["meta"] = self.meta
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> TaskInstance:
        window = doc.get("window")
        return cls(
            instance_id=doc["instance_id"],
            task=doc["task"],
            recording_id=doc["recording_id"],
            question=doc["question"],
            ground_truth=doc["ground_truth"],
            window=TimeSpan(*window) if window else None,
            meta=doc.get("meta", {}),
        )


def write_instances(instances: Iterable[TaskInstance], path: Path) -> None:
    write_jsonl(path, (i.to_dict() for i in instances))


def read_instances(path: str | Path) -> list[TaskInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(TaskInstance.from_dict(json.loads(line)))
    return out


# --- per-recording synthesis ----------------------------------------------------


@dataclass(frozen=True)
class Fact:
    name: str
    verb_base: str
    obj: str
    sentence: str
    speaker: str
    span: TimeSpan


@dataclass(frozen=True)
class PlantedEvent:
    label: str
    span: TimeSpan


@dataclass
class SynthRecording:
    recording_id: str
    duration: float
    sources: list[SourceSegment]
    speakers: list[Record] = field(default_factory=list)
    transcript: list[Record] = field(default_factory=list)
    emotion: list[Record] = field(default_factory=list)
    events: list[Record] = field(default_factory=list)
    facts: list[Fact] = field(default_factory=list)
    planted: list[PlantedEvent] = field(default_factory=list)
    # (source id, first index) of each source's records, for writing local files.
    _turn_source: list[str] = field(default_factory=list)
    _event_source: list[str] = field(default_factory=list)


def _name(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = "".join(rng.choice(_SYLLABLES) for _ in range(4)) + rng.choice("nrls")
        name = name.capitalize()
        if not any(name.lower() in t.lower() or t.lower() in name.lower() for t in taken):
            taken.add(name)
            return name


def _emotion_labels(rng: random.Random) -> list[tuple[str, float]]:
    top = rng.choices(EMOTIONS, weights=_EMOTION_WEIGHTS)[0]
    top_score = round(rng.uniform(0.42, 0.9), 2)
    others = rng.sample([e for e in EMOTIONS if e != top], 2)
    rest = 1.0 - top_score
    second = round(rest * rng.uniform(0.3, 0.6), 2)
    third = round(max(0.0, rest - second) * rng.uniform(0.2, 0.8), 2)
    return [(top, top_score), (others[0], second), (others[1], third)]


def _filler(rng: random.Random) -> str:
    words = rng.choices(FILLER_WORDS, k=rng.randint(4, 14))
    return " ".join(words).capitalize() + "."


def synthesize_recording(recording_id: str, minutes: int, rng: random.Random) -> SynthRecording:
    if minutes <= 0 or minutes % 5:
        raise BenchmarkError(f"duration {minutes} min is not a positive multiple of 5 minutes")
    total = minutes * 60.0
    sources = []
    offset = 0.0
    k = 0
    while offset < total:
        dur = min(SOURCE_SECONDS, total - offset)
        sources.append(SourceSegment(f"{recording_id}_s{k:02d}", offset, dur))
        offset += dur
        k += 1
    rec = SynthRecording(recording_id, total, sources)

    pool = [f"SPEAKER_{i:02d}" for i in rng.sample(range(100), rng.randint(4, 6))]
    names: set[str] = set()
    used_labels: list[str] = []

    for src in sources:
        src_speakers = rng.sample(pool, rng.randint(2, 4))
        blocks = [b * BLOCK_SECONDS for b in range(int(src.duration // BLOCK_SECONDS))]
        fact_times = sorted(b + rng.uniform(20.0, BLOCK_SECONDS - 40.0) for b in blocks)
        _speech(rec, src, src_speakers, fact_times, rng, names)
        _events(rec, src, blocks, rng, used_labels)
    return rec


def _speech(rec, src, src_speakers, fact_times, rng, names) -> None:
    t = rng.uniform(0.0, 2.0)
    speaker = rng.choice(src_speakers)
    pending = list(fact_times)
    end_limit = src.duration - 0.5
    while t < end_limit:
        if pending and pending[0] <= t:
            pending.pop(0)
            start = t + FACT_GUARD
            end = start + rng.uniform(3.0, 6.0)
            who = rng.choice(src_speakers)
            name = _name(rng, names)
            past, base = rng.choice(VERBS)
            obj = rng.choice(OBJECTS)
            sentence = f"{name} {past} {obj} near the {rng.choice(PLACES)}."
            span = TimeSpan(start + src.offset, end + src.offset)
            rec.facts.append(Fact(name, base, obj, sentence, who, span))
            _utterance(rec, src, start, end, who, sentence, rng)
            t = end + FACT_GUARD
            continue
        end = min(t + rng.uniform(1.5, 12.0), src.duration)
        if end - t < 0.5:
            break
        if rng.random() > 0.25:
            speaker = rng.choice([s for s in src_speakers if s != speaker])
        _utterance(rec, src, t, end, speaker, _filler(rng), rng)
        t = end + (0.0 if rng.random() < 0.7 else rng.uniform(0.2, 2.0))


def _utterance(rec, src, start, end, speaker, text, rng) -> None:
    g0, g1 = start + src.offset, end + src.offset
    rec.speakers.append(Record.speaker(g0, g1, speaker))
    rec.transcript.append(Record.transcript(g0, g1, text))
    rec.emotion.append(Record.scored(g0, g1, _emotion_labels(rng)))
    rec._turn_source.append(src.source_id)


def _events(rec, src, blocks, rng, used_labels) -> None:
    planted = []
    for b in blocks:
        onset = b + rng.uniform(10.0, BLOCK_SECONDS - 20.0)
        fresh = [l for l in EVENT_LABELS if l not in used_labels]
        label = rng.choice(fresh or list(EVENT_LABELS))
        used_labels.append(label)
        planted.append((onset, onset + rng.uniform(2.0, 8.0), label))
    items: list[tuple[float, float, list[tuple[str, float]], str | None]] = []
    t = 0.0
    while t < src.duration:
        end = min(t + EVENT_HOP, src.duration)
        labels = [(BACKGROUND_LABEL, round(rng.uniform(0.55, 0.95), 2))]
        if rng.random() < 0.3:
            labels.append((rng.choice(EVENT_LABELS), round(rng.uniform(0.05, 0.45), 2)))
        items.append((t, end, labels, None))
        t = end
    for onset, end, label in planted:
        labels = [(label, round(rng.uniform(0.6, 0.98), 2)), (BACKGROUND_LABEL, round(rng.uniform(0.2, 0.5), 2))]
        items.append((onset, end, labels, label))
    items.sort(key=lambda it: (it[0], it[1]))
    for start, end, labels, label in items:
        g0, g1 = start + src.offset, end + src.offset
        rec.events.append(Record.scored(g0, g1, labels))
        rec._event_source.append(src.source_id)
        if label is not None:
            rec.planted.append(PlantedEvent(label, TimeSpan(g0, g1)))


def write_recording(rec: SynthRecording, out_dir: Path) -> ManifestEntry:
    base = out_dir / "sources" / rec.recording_id
    base.mkdir(parents=True, exist_ok=True)
    offsets = {s.source_id: s.offset for s in rec.sources}

    def local(r: Record, sid: str) -> Record:
        return Record(TimeSpan(r.span.start - offsets[sid], r.span.end - offsets[sid]), r.text, r.label, r.labels)

    rttm = "".join(format_rttm(sid, [local(r, sid)]) for r, sid in zip(rec.speakers, rec._turn_source))
    (base / "diarization.rttm").write_text(rttm, encoding="utf-8")
    write_jsonl(base / "transcript.jsonl", (record_to_row(local(r, s), s) for r, s in zip(rec.transcript, rec._turn_source)))
    write_jsonl(base / "emotion.jsonl", (record_to_row(local(r, s), s) for r, s in zip(rec.emotion, rec._turn_source)))
    write_jsonl(base / "events.jsonl", (record_to_row(local(r, s), s) for r, s in zip(rec.events, rec._event_source)))
    return ManifestEntry(
        recording_id=rec.recording_id,
        duration=rec.duration,
        diarization=base / "diarization.rttm",
        transcript=base / "transcript.jsonl",
        emotion=base / "emotion.jsonl",
        events=base / "events.jsonl",
        sources=tuple(rec.sources),
    )


# --- task instances ---------------------------------------------------------------


def _windows(total: float, size: float) -> list[TimeSpan]:
    out, t = [], 0.0
    while t < total:
        out.append(TimeSpan(t, min(t + size, total)))
        t += size
    return out


def _in_window(records: Sequence[Record], window: TimeSpan) -> list[Record]:
    return [r for r in records if r.span.overlaps_window(window)]


def _options(fact: Fact, rec: SynthRecording, rng: random.Random) -> tuple[list[str], str]:
    distractors = [o for o in dict.fromkeys(f.obj for f in rec.facts) if o != fact.obj]
    extra = [o for o in OBJECTS if o != fact.obj and o not in distractors]
    rng.shuffle(extra)
    picked = rng.sample(distractors, min(3, len(distractors)))
    picked += extra[: 3 - len(picked)]
    options = picked + [fact.obj]
    rng.shuffle(options)
    return options, "ABCD"[options.index(fact.obj)]


def instances_for(rec: SynthRecording, tasks: Sequence[str], rng: random.Random) -> list[TaskInstance]:
    out: list[TaskInstance] = []
    rid = rec.recording_id

    def add(task: str, question: str, truth: Any, window: TimeSpan | None = None, **meta: Any) -> None:
        n = sum(1 for i in out if i.task == task)
        out.append(TaskInstance(f"{rid}/{task}/{n:04d}", task, rid, question, truth, window, meta))

    for task in tasks:
        if task == "qa1":
            for f in rec.facts:
                add(task, templates.qa1(f"What did {f.name} {f.verb_base}?"), f.sentence, f.span)
        elif task == "mcqa":
            for f in rec.facts:
                options, letter = _options(f, rec, rng)
                add(task, templates.mcqa(f"What did {f.name} {f.verb_base}?", options), letter, f.span)
        elif task == "summarization":
            for w in _windows(rec.duration, SUMMARY_WINDOW):
                reference = " ".join(r.text or "" for r in _in_window(rec.transcript, w))
                add(task, templates.summarization(w.start, w.end), reference, w)
        elif task == "diarization":
            for w in _windows(rec.duration, DIAR_WINDOW):
                segs = [
                    [max(r.span.start, w.start), min(r.span.end, w.end), r.label]
                    for r in _in_window(rec.speakers, w)
                ]
                add(task, templates.diarization(w.start, w.end), segs, w)
        elif task == "emotion":
            for w in _windows(rec.duration, BLOCK_SECONDS):
                inside = [i for i, r in enumerate(rec.emotion) if w.start <= r.span.start and r.span.end <= w.end]
                if not inside:
                    continue
                r = rec.emotion[rng.choice(inside)]
                add(task, templates.emotion(r.span.start, r.span.end), r.top.label, r.span, label_set=list(EMOTIONS))
        elif task == "sed":
            for ev in rec.planted:
                truth = [[p.label, p.span.start, p.span.end] for p in rec.planted if p.label == ev.label]
                add(task, templates.sed([ev.label]), truth)
        elif task == "speaker_count":
            for w in _windows(rec.duration, COUNT_WINDOW):
                count = len({r.label for r in _in_window(rec.speakers, w)})
                add(task, templates.speaker_count(w.start, w.end), count, w)
        elif task == "event_ordering":
            first: dict[str, float] = {}
            for p in rec.planted:
                first.setdefault(p.label, p.span.start)
            if len(first) < 3:
                raise BenchmarkError(f"{rid}: event ordering needs at least 3 distinct planted events")
            labels = rng.sample(sorted(first), 3)
            order = sorted(range(1, 4), key=lambda i: first[labels[i - 1]])
            whole = TimeSpan(0.0, rec.duration)
            add(task, templates.event_ordering(labels, whole.start, whole.end), order, whole, labels=labels)
        elif task == "speaker_constrained_qa":
            present = sorted({r.label for r in rec.speakers})
            for f in rec.facts:
                options, letter = _options(f, rec, rng)
                q = f"What did {f.name} {f.verb_base}?"
                add(task, templates.speaker_constrained_qa(f.speaker, q, options), letter, f.span, answerable=True)
                other = rng.choice([s for s in present if s != f.speaker])
                add(task, templates.speaker_constrained_qa(other, q, options), ABSTAIN_REPLY, f.span, answerable=False)
        else:
            raise BenchmarkError(f"unknown task {task!r}")
    return out


def generate_benchmark(
    duration_minutes: int,
    tasks: Sequence[str],
    seed: int,
    out_dir: str | Path,
    recordings: int = 1,
) -> tuple[list[ManifestEntry], list[TaskInstance]]:
    """Write sources, ``manifest.json`` and ``instances.jsonl`` under ``out_dir``.

    Deterministic in ``(duration_minutes, tasks, seed, recordings)``.
    """
    unknown = [t for t in tasks if t not in templates.TASKS]
    if unknown:
        raise BenchmarkError(f"unknown tasks {unknown}")
    out_dir = Path(out_dir)
    entries, instances = [], []
    for i in range(recordings):
        rid = f"syn{duration_minutes:03d}m-{seed}-{i:03d}"
        rng = random.Random(f"{seed}/{duration_minutes}/{i}")
        rec = synthesize_recording(rid, duration_minutes, rng)
        entries.append(write_recording(rec, out_dir))
        instances.extend(instances_for(rec, tasks, random.Random(f"{seed}/{duration_minutes}/{i}/tasks")))
    write_manifest(entries, out_dir / "manifest.json")
    write_instances(instances, out_dir / "instances.jsonl")
    return entries, instances
