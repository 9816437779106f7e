"""Onset, frame and event scoring plus report assembly.

Events are anything with ``onset``/``offset``/``label`` attributes (or
``start``/``end`` for unlabelled segments). All matchings are maximum
cardinality bipartite matchings, so one reference is never credited twice.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import ParameterError
from .signal_io import CALL_TYPES, Label

CALL = "call"   # the single class used when labels are erased


@dataclass(frozen=True)
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f_measure(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def present(self) -> bool:
        return self.tp + self.fp + self.fn > 0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": _r(self.precision), "recall": _r(self.recall),
                "f_measure": _r(self.f_measure)}


def _r(v: float) -> float:
    return round(float(v), 6)


def _span(e) -> tuple[float, float, str]:
    if isinstance(e, tuple) and not hasattr(e, "_fields"):
        a, b, *lab = e
        return float(a), float(b), str(lab[0]) if lab else CALL
    if hasattr(e, "onset"):
        lab = getattr(e, "label", CALL)
        return float(e.onset), float(e.offset), Label(lab).value if isinstance(lab, Label) else str(lab)
    return float(e.start), float(e.end), CALL


def _erase(events) -> list[tuple[float, float, str]]:
    return [(a, b, CALL) for a, b, _ in map(_span, events)]


def max_matching(adj: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-cardinality matching of a boolean biadjacency matrix, as (row, col) pairs."""
    adj = np.asarray(adj, dtype=bool)
    if adj.size == 0 or not adj.any():
        return []
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return [(i, int(j)) for i, j in enumerate(match) if j >= 0]


def match_onsets(ref, pred, window: float = 0.15) -> PRF:
    ref = np.asarray(ref, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    adj = np.abs(ref[:, None] - pred[None, :]) <= window + 1e-9
    tp = len(max_matching(adj))
    return PRF(tp, pred.size - tp, ref.size - tp)


def rasterize(events, n_cells: int, grid: float) -> np.ndarray:
    """Label string per grid cell (``''`` for none); a cell takes the label of
    the event covering its centre."""
    out = np.full(n_cells, "", dtype=object)
    centres = (np.arange(n_cells) + 0.5) * grid
    for a, b, lab in events:
        out[(centres >= a) & (centres < b)] = lab
    return out


def frame_eval(ref, pred, grid: float = 0.01, total_dur: float | None = None,
               classes=None) -> dict[str, PRF]:
    """Per-class cell counts on a ``grid``-second raster of both event lists."""
    if grid <= 0:
        raise ParameterError("grid must be positive")
    r = [_span(e) for e in ref]
    p = [_span(e) for e in pred]
    if total_dur is None:
        total_dur = max([b for _, b, _ in r + p], default=0.0)
    n = int(math.ceil(total_dur / grid - 1e-9))
    rr, pp = rasterize(r, n, grid), rasterize(p, n, grid)
    if classes is None:
        classes = sorted({lab for _, _, lab in r + p})
    out = {}
    for c in classes:
        c = Label(c).value if isinstance(c, Label) else str(c)
        rc, pc = rr == c, pp == c
        out[c] = PRF(int(np.sum(rc & pc)), int(np.sum(pc & ~rc)), int(np.sum(rc & ~pc)))
    return out


def event_match_matrix(ref, pred, onset_tol: float = 0.1, dur_ratio: float = 0.5,
                       mode: str = "duration") -> np.ndarray:
    """Boolean [n_ref, n_pred] admissibility of same-class pairs.

    ``mode='duration'``: predicted duration >= ``dur_ratio`` x reference
    duration. ``mode='overlap'``: temporal overlap >= ``dur_ratio`` x
    reference duration.
    """
    if onset_tol < 0 or dur_ratio < 0:
        raise ParameterError("tolerances must be >= 0")
    if mode not in ("duration", "overlap"):
        raise ParameterError(f"unknown event match mode {mode!r}")
    r = [_span(e) for e in ref]
    p = [_span(e) for e in pred]
    adj = np.zeros((len(r), len(p)), dtype=bool)
    for i, (ra, rb, rl) in enumerate(r):
        for j, (pa, pb, pl) in enumerate(p):
            if rl != pl or abs(pa - ra) > onset_tol + 1e-9:
                continue
            amount = (pb - pa) if mode == "duration" else max(0.0, min(rb, pb) - max(ra, pa))
            adj[i, j] = amount >= dur_ratio * (rb - ra) - 1e-9
    return adj


def event_eval(ref, pred, onset_tol: float = 0.1, dur_ratio: float = 0.5,
               mode: str = "duration", classes=None) -> dict[str, PRF]:
    r = [_span(e) for e in ref]
    p = [_span(e) for e in pred]
    if classes is None:
        classes = sorted({lab for _, _, lab in r + p})
    out = {}
    for c in classes:
        c = Label(c).value if isinstance(c, Label) else str(c)
        rc = [e for e in r if e[2] == c]
        pc = [e for e in p if e[2] == c]
        tp = len(max_matching(event_match_matrix(rc, pc, onset_tol, dur_ratio, mode)))
        out[c] = PRF(tp, len(pc) - tp, len(rc) - tp)
    return out


def event_decisions(ref, pred, onset_tol: float = 0.1, dur_ratio: float = 0.5,
                    mode: str = "duration") -> list[dict]:
    """Per-event outcome rows (``tp``/``fn`` for references, ``fp`` for
    unmatched predictions) for error analysis."""
    r = [_span(e) for e in ref]
    p = [_span(e) for e in pred]
    pairs = dict(max_matching(event_match_matrix(r, p, onset_tol, dur_ratio, mode)))
    rows = []
    for i, (a, b, lab) in enumerate(r):
        j = pairs.get(i)
        rows.append({"kind": "ref", "onset": a, "offset": b, "label": lab,
                     "status": "tp" if j is not None else "fn", "match": -1 if j is None else j})
    used = set(pairs.values())
    for j, (a, b, lab) in enumerate(p):
        rows.append({"kind": "pred", "onset": a, "offset": b, "label": lab,
                     "status": "tp" if j in used else "fp", "match": -1})
    return rows


@dataclass(frozen=True)
class MacroF:
    value: float
    classes: tuple[str, ...]          # classes averaged over
    absent: tuple[str, ...] = ()      # expected classes with no reference or prediction


def macro_f(per_class, expected=None) -> MacroF:
    """Unweighted mean of per-class F.

    ``per_class`` is either a sequence of F values (all averaged) or a
    mapping class -> PRF. For a mapping, classes with no reference and no
    predicted instance are reported in ``absent`` and left out of the mean.
    """
    if not isinstance(per_class, dict):
        fs = [float(v) for v in per_class]
        return MacroF(float(np.mean(fs)) if fs else 0.0, tuple(str(i) for i in range(len(fs))))
    expected = [Label(c).value if isinstance(c, Label) else c for c in (expected or per_class)]
    used = [c for c in expected if c in per_class and per_class[c].present]
    absent = tuple(c for c in expected if c not in used)
    value = float(np.mean([per_class[c].f_measure for c in used])) if used else 0.0
    return MacroF(value, tuple(used), absent)


def segmentation_eval(ref, segments, grid: float = 0.01, total_dur: float | None = None,
                      onset_tol: float = 0.1, dur_ratio: float = 0.5,
                      mode: str = "duration") -> tuple[PRF, PRF]:
    """(frame PRF, event PRF) with all labels erased."""
    r, s = _erase(ref), _erase(segments)
    fr = frame_eval(r, s, grid, total_dur, classes=[CALL])[CALL]
    ev = event_eval(r, s, onset_tol, dur_ratio, mode, classes=[CALL])[CALL]
    return fr, ev


# ----------------------------------------------------------------- reports

_CLASSES = tuple(c.value for c in CALL_TYPES)


@dataclass
class SubjectResult:
    subject_id: str
    frame: dict[str, PRF] = field(default_factory=dict)
    event: dict[str, PRF] = field(default_factory=dict)
    onset: PRF | None = None
    seg_frame: PRF | None = None
    seg_event: PRF | None = None


def _sum(dicts) -> dict[str, PRF]:
    out: dict[str, PRF] = {}
    for d in dicts:
        for k, v in d.items():
            out[k] = out.get(k, PRF()) + v
    return out


@dataclass
class EvalReport:
    subjects: list[SubjectResult]
    meta: dict = field(default_factory=dict)

    def totals(self) -> SubjectResult:
        """Counts summed over subjects (order independent)."""
        def opt(name):
            vals = [getattr(s, name) for s in self.subjects if getattr(s, name) is not None]
            return sum(vals, PRF()) if vals else None
        return SubjectResult("all", _sum(s.frame for s in self.subjects),
                             _sum(s.event for s in self.subjects),
                             opt("onset"), opt("seg_frame"), opt("seg_event"))

    def _block(self, s: SubjectResult) -> dict:
        out = {
            "frame": {c: s.frame.get(c, PRF()).as_dict() for c in _CLASSES},
            "event": {c: s.event.get(c, PRF()).as_dict() for c in _CLASSES},
        }
        for kind in ("frame", "event"):
            m = macro_f(getattr(s, kind), _CLASSES)
            out[f"macro_{kind}"] = {"f_measure": _r(m.value), "classes": list(m.classes),
                                    "absent": list(m.absent)}
        for name in ("onset", "seg_frame", "seg_event"):
            v = getattr(s, name)
            out[name] = v.as_dict() if v is not None else None
        return out

    def to_dict(self) -> dict:
        subjects = sorted(self.subjects, key=lambda s: s.subject_id)
        return {"meta": self.meta, "overall": self._block(self.totals()),
                "subjects": {s.subject_id: self._block(s) for s in subjects}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        d = self.to_dict()
        lines = []
        head = f"{'':<12}" + "".join(f"{c:>11}" for c in _CLASSES) + f"{'macro':>11}"
        for name, block in [("overall", d["overall"])] + sorted(d["subjects"].items()):
            lines.append(f"[{name}]")
            lines.append(head)
            for kind in ("frame", "event"):
                absent = set(block["macro_" + kind]["absent"])
                row = "".join(f"{'-':>11}" if c in absent else f"{100 * block[kind][c]['f_measure']:>11.1f}"
                              for c in _CLASSES)
                lines.append(f"{kind + ' F':<12}{row}{100 * block['macro_' + kind]['f_measure']:>11.1f}")
            for name2, label in (("onset", "onset"), ("seg_frame", "seg frame"), ("seg_event", "seg event")):
                v = block[name2]
                if v is not None:
                    lines.append(f"{label:<12}P {100 * v['precision']:5.1f}  R {100 * v['recall']:5.1f}"
                                 f"  F {100 * v['f_measure']:5.1f}")
            lines.append("")
        return "\n".join(lines)
