"""Task metrics and topline normalization."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

Segment = tuple[float, float, str]


class MetricError(ValueError):
    pass


# --- Rouge-L ----------------------------------------------------------------


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, bit-parallel over ``b``.

    One big-int row update per token of ``a``; zero bits of the row mark LCS growth.
    """
    if not a or not b:
        return 0
    match: dict[str, int] = {}
    for j, tok in enumerate(b):
        match[tok] = match.get(tok, 0) | (1 << j)
    full = (1 << len(b)) - 1
    row = full
    for tok in a:
        m = match.get(tok, 0)
        row = ((row + (row & m)) | (row & ~m)) & full
    return len(b) - bin(row).count("1")


def rouge_l_prf(candidate: str, reference: str) -> tuple[float, float, float]:
    """(precision, recall, F1) on lowercased whitespace tokens."""
    cand, ref = candidate.lower().split(), reference.lower().split()
    if not cand and not ref:
        return 1.0, 1.0, 1.0
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0, 0.0, 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return p, r, 2 * p * r / (p + r)


def rouge_l(candidate: str, reference: str) -> float:
    return rouge_l_prf(candidate, reference)[2]


# --- DER --------------------------------------------------------------------


@dataclass(frozen=True)
class DerBreakdown:
    missed: float
    false_alarm: float
    confusion: float
    total: float

    @property
    def der(self) -> float:
        return 100.0 * (self.missed + self.false_alarm + self.confusion) / self.total


def _to_ms(segments: Sequence[Segment]) -> list[tuple[int, int, str]]:
    return [(round(s * 1000), round(e * 1000), l) for s, e, l in segments]


def _elementary(reference: Sequence[Segment], hypothesis: Sequence[Segment]):
    """Yield (duration ms, ref speaker set, hyp speaker set) over the common time grid.

    Times are snapped to integer milliseconds so the sums are exact; a
    perfect hypothesis then scores exactly zero.
    """
    reference, hypothesis = _to_ms(reference), _to_ms(hypothesis)
    cuts = sorted({t for s, e, _ in (*reference, *hypothesis) for t in (s, e)})
    for lo, hi in zip(cuts, cuts[1:]):
        if hi <= lo:
            continue
        refs = frozenset(l for s, e, l in reference if s <= lo and e >= hi)
        hyps = frozenset(l for s, e, l in hypothesis if s <= lo and e >= hi)
        if refs or hyps:
            yield hi - lo, refs, hyps


def der_breakdown(reference: Sequence[Segment], hypothesis: Sequence[Segment], allow_empty: bool = False) -> DerBreakdown:
    """No collar, overlapped speech scored; optimal one-to-one label mapping.

    With ``allow_empty`` a reference without speech yields a breakdown whose
    only error is false alarm (useful when pooling windows).
    """
    pieces = list(_elementary(reference, hypothesis))
    total = sum(d * len(r) for d, r, _ in pieces)
    if total <= 0 and not allow_empty:
        raise MetricError("reference has no speech time")
    ref_labels = sorted({l for _, _, l in reference})
    hyp_labels = sorted({l for _, _, l in hypothesis})
    overlap = np.zeros((len(ref_labels), len(hyp_labels)), dtype=np.int64)
    ri = {l: i for i, l in enumerate(ref_labels)}
    hi_ = {l: i for i, l in enumerate(hyp_labels)}
    missed = false_alarm = matched_cap = 0
    for d, refs, hyps in pieces:
        missed += d * max(0, len(refs) - len(hyps))
        false_alarm += d * max(0, len(hyps) - len(refs))
        matched_cap += d * min(len(refs), len(hyps))
        for r in refs:
            for h in hyps:
                overlap[ri[r], hi_[h]] += d
    correct = 0
    if overlap.size:
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        correct = int(overlap[rows, cols].sum())
    confusion = max(0, matched_cap - correct)
    return DerBreakdown(missed / 1000, false_alarm / 1000, confusion / 1000, total / 1000)


def der(reference: Sequence[Segment], hypothesis: Sequence[Segment]) -> float:
    return der_breakdown(reference, hypothesis).der


def clip_segments(segments: Iterable[Segment], start: float, end: float) -> list[Segment]:
    out = []
    for s, e, l in segments:
        s2, e2 = max(s, start), min(e, end)
        if e2 > s2:
            out.append((s2, e2, l))
    return out


# --- event F1 ---------------------------------------------------------------

Event = tuple[str, float]  # (label, onset)


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    def __add__(self, other: MatchCounts) -> MatchCounts:
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def f1(self) -> float:
        if self.tp == 0 and self.fp == 0 and self.fn == 0:
            return 1.0
        return 2 * self.tp / (2 * self.tp + self.fp + self.fn)


def event_matches(reference: Iterable[Event], hypothesis: Iterable[Event], tolerance: float = 5.0) -> MatchCounts:
    """Greedy per-label pairing by ascending onset within ``tolerance`` seconds.

    Equal-width tolerance windows make this greedy pass a maximum matching.
    """
    if tolerance < 0:
        raise MetricError("tolerance must be non-negative")
    ref_by, hyp_by = defaultdict(list), defaultdict(list)
    for label, onset in reference:
        ref_by[label].append(onset)
    for label, onset in hypothesis:
        hyp_by[label].append(onset)
    tp = fp = fn = 0
    for label in ref_by.keys() | hyp_by.keys():
        refs, hyps = sorted(ref_by[label]), sorted(hyp_by[label])
        used = [False] * len(refs)
        start = 0
        hits = 0
        for h in hyps:
            # rounding keeps millisecond onsets exactly on the tolerance boundary
            while start < len(refs) and (used[start] or round(h - refs[start], 9) > tolerance):
                start += 1
            if start < len(refs) and round(abs(refs[start] - h), 9) <= tolerance:
                used[start] = True
                hits += 1
        tp += hits
        fp += len(hyps) - hits
        fn += len(refs) - hits
    return MatchCounts(tp, fp, fn)


def event_f1(reference: Iterable[Event], hypothesis: Iterable[Event], tolerance: float = 5.0) -> float:
    return event_matches(reference, hypothesis, tolerance).f1


# --- ranking ----------------------------------------------------------------


def _ranks(order: Sequence[int]) -> dict[int, int]:
    return {item: pos for pos, item in enumerate(order, 1)}


def spearman_rho(truth_order: Sequence[int], predicted_order: Sequence[int]) -> float:
    """Rank correlation between two orderings of the items 1..n."""
    n = len(truth_order)
    if n != len(predicted_order):
        raise MetricError("orderings differ in length")
    if n < 2:
        raise MetricError("need at least two items")
    expected = list(range(1, n + 1))
    if sorted(truth_order) != expected or sorted(predicted_order) != expected:
        raise MetricError("orderings must be permutations of 1..n")
    rt, rp = _ranks(truth_order), _ranks(predicted_order)
    d2 = sum((rt[i] - rp[i]) ** 2 for i in expected)
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


# --- classification ---------------------------------------------------------


def macro_f1(reference_labels: Sequence[Hashable], predicted_labels: Sequence[Hashable | None], label_set: Iterable[Hashable]) -> float:
    """Unweighted mean of per-label F1.

    Labels that neither occur in the reference nor get predicted are left out
    of the mean. A ``None`` prediction counts as a miss for its reference label.
    """
    labels = list(dict.fromkeys(label_set))
    if not labels:
        raise MetricError("empty label set")
    if len(reference_labels) != len(predicted_labels):
        raise MetricError("reference and prediction lengths differ")
    scores = []
    for label in labels:
        tp = sum(1 for r, p in zip(reference_labels, predicted_labels) if r == label and p == label)
        fp = sum(1 for r, p in zip(reference_labels, predicted_labels) if r != label and p == label)
        fn = sum(1 for r, p in zip(reference_labels, predicted_labels) if r == label and p != label)
        if tp + fp + fn == 0:
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return sum(scores) / len(scores) if scores else 1.0


# --- normalization ----------------------------------------------------------


def normalize_score(raw: float, topline: float, error_based: bool = False) -> float:
    """100 * t(raw) / t(topline), clamped to [0, 100]; t(x) = 100 - x for error metrics."""
    t_raw = 100.0 - raw if error_based else raw
    t_top = 100.0 - topline if error_based else topline
    if not math.isfinite(t_top) or t_top <= 0:
        raise MetricError(f"topline transform must be positive, got {t_top}")
    return min(100.0, max(0.0, 100.0 * t_raw / t_top))
