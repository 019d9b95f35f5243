"""Task query templates shared by the benchmark generator and the rule planner."""

from __future__ import annotations

from typing import Sequence

from .plan import ABSTAIN_REPLY

TASKS = (
    "qa1",
    "mcqa",
    "summarization",
    "diarization",
    "emotion",
    "sed",
    "speaker_count",
    "event_ordering",
    "speaker_constrained_qa",
)


def fmt_seconds(value: float) -> str:
    """Compact seconds: 300.0 -> '300', 325.41 -> '325.41'."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text or "0"


def options_line(question: str, options: Sequence[str]) -> str:
    letters = "ABCDEFGH"
    parts = [f"{letters[i]}) {opt}" for i, opt in enumerate(options)]
    return f"{question} " + " ".join(parts)


def qa1(question: str) -> str:
    return f"Given the context, answer the following question in a short sentence:\n{question}"


def mcqa(question: str, options: Sequence[str]) -> str:
    return (
        "Given the context, answer the following question with the letter of one option:\n"
        + options_line(question, options)
    )


def summarization(start: float, end: float) -> str:
    return (
        "## Task\n"
        "Please provide an abstractive summary of this meeting.\n\n"
        f"You should work on summarization starting from {fmt_seconds(start)} sec to {fmt_seconds(end)} sec.\n"
        "Produce a concise, factual summary covering goals, key decisions, concerns,\n"
        "and next steps.\n\n"
        "Stay within 5-7 sentences.\n"
        "## Answer"
    )


def diarization(start: float, end: float) -> str:
    return (
        "## Task\n"
        "Perform speaker diarization for the provided audio segment spanning\n"
        f"{fmt_seconds(start)} to {fmt_seconds(end)} seconds in the original recording.\n\n"
        "## Requirements\n"
        '- Generate JSON {"segments": [{"start": 0.0, "end": 0.0, "label": "speaker"}]}\n\n'
        "## Answer"
    )


def emotion(start: float, end: float) -> str:
    return (
        f"You are an emotion recognition model. Analyze the audio between {fmt_seconds(start)} and {fmt_seconds(end)}\n"
        "seconds and respond with the emotion in the format\n"
        '{"labels": ["Happy", "Angry"]}.\n'
        "Return the most likely label(s)."
    )


def sed(labels: Sequence[str]) -> str:
    return (
        "You are a sound event localization (SED) model. Detect occurrences of the\n"
        f"following sound event label(s): {'; '.join(labels)} in the audio clip.\n"
        'Return JSON in the format {"segments": [{"start": 0.0, "end": 0.0, "label": "<event label>"}]}.\n'
        "Fewer events are preferred."
    )


def speaker_count(start: float, end: float) -> str:
    return (
        "## Task\n"
        f"You should count the number of speakers starting from {fmt_seconds(start)} sec to {fmt_seconds(end)} sec.\n\n"
        "## Requirements\n"
        "- Generate the following json including the number of speakers in integer.\n\n"
        '{"answer": <integer>}\n\n'
        "## Answer"
    )


def event_ordering(labels: Sequence[str], start: float, end: float) -> str:
    listed = "".join(f"({i}) {label}\n" for i, label in enumerate(labels, 1))
    order = ", ".join(str(i) for i in range(1, len(labels) + 1))
    return (
        "You are given the following sound event labels:\n"
        f"{listed}"
        "Determine the correct chronological order of these events based on their first\n"
        f"occurrence in the audio clip ({fmt_seconds(start)} to {fmt_seconds(end)} seconds). Return JSON in the\n"
        f'format {{"order": [{order}]}}.'
    )


def speaker_constrained_qa(speaker: str, question: str, options: Sequence[str]) -> str:
    return (
        "## Task\n"
        f"You should work on the utterance from speaker {speaker}.\n"
        "If you cannot answer the question from the given speaker, just reply\n"
        f'"{ABSTAIN_REPLY}"\n\n'
        "## Question\n"
        "Given the context, answer the following question with the letter of one option:\n"
        f"{options_line(question, options)}\n\n"
        "## Answer"
    )
