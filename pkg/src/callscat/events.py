"""Frame labels <-> call events: fusion, gap filling, pruning and voting."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, ParameterError
from .signal_io import CALL_TYPES, AnnotationSet, CallEvent, Label


@dataclass
class LabeledFrameSeq:
    """Frame ``i`` covers ``[start_time + i*frame_hop, start_time + (i+1)*frame_hop)``.

    ``decisions`` optionally holds per-frame classifier scores, one column
    per entry of ``classes``; they only serve as vote tie-breakers.
    """
    labels: Sequence[Label]
    frame_hop: float
    start_time: float = 0.0
    decisions: np.ndarray | None = None
    classes: tuple[Label, ...] = CALL_TYPES

    def __post_init__(self):
        if not self.frame_hop > 0:
            raise ParameterError("frame_hop must be positive")
        self.labels = [Label(v) for v in self.labels]

    def __len__(self):
        return len(self.labels)

    def time(self, i: int) -> float:
        return self.start_time + i * self.frame_hop


def fuse_frames(frames: LabeledFrameSeq) -> list[CallEvent]:
    """Maximal runs of one non-background label become events."""
    out = []
    labels = frames.labels
    i, n = 0, len(labels)
    while i < n:
        j = i
        while j < n and labels[j] == labels[i]:
            j += 1
        if labels[i] is not Label.BACKGROUND:
            out.append(CallEvent(frames.time(i), frames.time(j), labels[i]))
        i = j
    return out


def label_frames(events: Sequence[CallEvent], n_frames: int, frame_hop: float,
                 start_time: float = 0.0) -> LabeledFrameSeq:
    """Label each frame by the event covering its centre (background otherwise)."""
    centres = start_time + (np.arange(n_frames) + 0.5) * frame_hop
    labels = [Label.BACKGROUND] * n_frames
    for e in events:
        for i in np.flatnonzero((centres >= e.onset) & (centres < e.offset)):
            labels[i] = Label(e.label)
    return LabeledFrameSeq(labels, frame_hop, start_time)


def _merge(events: list[CallEvent], min_gap: dict) -> list[CallEvent]:
    out: list[CallEvent] = []
    for e in events:
        if out and out[-1].label == e.label and e.onset - out[-1].offset < min_gap.get(e.label, 0.0):
            out[-1] = CallEvent(out[-1].onset, max(out[-1].offset, e.offset), e.label)
        else:
            out.append(e)
    return out


def postprocess(events: Sequence[CallEvent], min_gap: dict, min_dur: dict) -> list[CallEvent]:
    """Fill same-type gaps shorter than ``min_gap[type]``, then drop events
    shorter than ``min_dur[type]``.

    Pruning can leave two same-type events next to each other, so the pair
    of steps repeats until nothing changes; the result is a fixed point and
    a second call returns it unchanged.
    """
    for d in (min_gap, min_dur):
        if any(v < 0 for v in d.values()):
            raise ParameterError("thresholds must be >= 0")
    min_gap = {Label(k): v for k, v in min_gap.items()}
    min_dur = {Label(k): v for k, v in min_dur.items()}
    cur = sorted(events)
    while True:
        merged = _merge(cur, min_gap)
        pruned = [e for e in merged if e.duration >= min_dur.get(e.label, 0.0)]
        if pruned == cur:
            return cur
        cur = pruned


@dataclass(frozen=True)
class Thresholds:
    min_gap: dict
    min_dur: dict
    missing: frozenset = field(default_factory=frozenset)   # types with no training event


def training_thresholds(annotations: Sequence[AnnotationSet],
                        types: Sequence[Label] = CALL_TYPES) -> Thresholds:
    """Shortest training event per type, used both as gap and duration limit."""
    durs: dict[Label, list[float]] = {t: [] for t in types}
    for ann in annotations:
        for e in ann.events:
            if e.label in durs:
                durs[e.label].append(e.duration)
    min_dur = {t: (min(v) if v else 0.0) for t, v in durs.items()}
    missing = frozenset(t for t, v in durs.items() if not v)
    return Thresholds(dict(min_dur), dict(min_dur), missing)


def majority_vote(frames: LabeledFrameSeq) -> Label:
    """Most frequent non-background label of a segment's frames.

    Ties go to the larger summed decision value, then to the fixed order
    contact, pleasure, uncertain. All-background frames vote background.
    """
    if len(frames) == 0:
        raise InputError("majority vote over an empty frame set")
    counts = Counter(v for v in frames.labels if v is not Label.BACKGROUND)
    if not counts:
        return Label.BACKGROUND
    top = max(counts.values())
    tied = [c for c in CALL_TYPES if counts.get(c, 0) == top]
    if len(tied) == 1:
        return tied[0]
    if frames.decisions is not None:
        dec = np.asarray(frames.decisions, dtype=np.float64)
        sums = {c: float(dec[:, frames.classes.index(c)].sum())
                for c in tied if c in frames.classes}
        if sums:
            best = max(sums.values())
            tied = [c for c in tied if sums.get(c, -np.inf) == best]
    return tied[0]


def events_of_type(events, label) -> list[CallEvent]:
    return [e for e in events if e.label == Label(label)]


def total_duration(events) -> float:
    return float(sum(e.duration for e in events))
