import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from callscat.errors import ParameterError
from callscat.evaluation import (PRF, EvalReport, SubjectResult, event_decisions, event_eval, frame_eval,
                                 macro_f, match_onsets, segmentation_eval)
from callscat.detection import Segment
from callscat.signal_io import CallEvent, Label
from oracles import brute_event_tp, brute_frame_counts, brute_onset_tp

P, C, U = "pleasure", "contact", "uncertain"


def test_prf_degenerate():
    z = PRF()
    assert (z.precision, z.recall, z.f_measure) == (0.0, 0.0, 0.0)
    p = PRF(3, 1, 2)
    assert p.f_measure == pytest.approx(2 * 0.75 * 0.6 / 1.35)


def test_onset_examples():
    assert match_onsets([1.0, 2.0], [1.0, 2.0]).f_measure == 1.0
    assert match_onsets([1.0], [1.1]).tp == 1
    r = match_onsets([1.0, 1.1], [1.05])
    assert (r.tp, r.fp, r.fn) == (1, 0, 1)


def test_frame_examples():
    ref = [(1.0, 2.0, P), (3.0, 3.4, C)]
    out = frame_eval(ref, ref, 0.01, 5.0)
    assert out[P].f_measure == 1.0 and out[C].f_measure == 1.0
    half = [(1.0, 1.5, P), (3.0, 3.2, C)]
    out = frame_eval(ref, half, 0.01, 5.0)
    for c in (P, C):
        assert out[c].precision == 1.0 and abs(out[c].recall - 0.5) <= 1 / out[c].fn
    empty = frame_eval(ref, [], 0.01, 5.0)
    assert empty[P].precision == 0.0 and empty[P].recall == 0.0
    with pytest.raises(ParameterError):
        frame_eval(ref, ref, 0.0)


def test_event_examples():
    ref = [(1.0, 2.0, P)]
    assert event_eval(ref, ref)[P].f_measure == 1.0
    hit = event_eval(ref, [(1.09, 1.69, P)])[P]
    assert (hit.tp, hit.fp, hit.fn) == (1, 0, 0)
    miss = event_eval(ref, [(1.09, 1.49, P)])[P]
    assert (miss.tp, miss.fp, miss.fn) == (0, 1, 1)
    wrong_class = event_eval(ref, [(1.0, 2.0, C)], classes=[P, C])
    assert wrong_class[P].fn == 1 and wrong_class[C].fp == 1


def test_overlap_mode():
    ref = [(1.0, 2.0, P)]
    # long enough, but it sits mostly after the reference
    pred = [(1.09, 2.5, P)]
    assert event_eval(ref, pred, mode="duration")[P].tp == 1
    assert event_eval(ref, pred, mode="overlap", dur_ratio=0.95)[P].tp == 0


def test_macro_examples():
    assert macro_f([1, 1, 1]).value == 1.0
    assert macro_f([0.603, 0.953, 0.220]).value == pytest.approx(0.592, abs=5e-4)
    assert macro_f([0.105, 0.795, 0.063]).value == pytest.approx(0.321, abs=5e-4)


def test_macro_skips_absent_classes():
    per = {P: PRF(5, 0, 0), C: PRF(1, 1, 0), U: PRF()}
    m = macro_f(per, [C, P, U])
    assert m.classes == (C, P) and m.absent == (U,)
    assert m.value == pytest.approx((1.0 + 2 / 3) / 2)
    # a class with references but no hit still counts, with F = 0
    m2 = macro_f({P: PRF(5, 0, 0), C: PRF(0, 0, 3)}, [C, P])
    assert m2.value == pytest.approx(0.5)


def test_segmentation_examples():
    ref = [CallEvent(1.0, 1.5, Label.PLEASURE), CallEvent(2.0, 2.8, Label.CONTACT)]
    segs = [Segment(1.0, 1.5), Segment(2.0, 2.8)]
    fr, ev = segmentation_eval(ref, segs)
    assert fr.f_measure == 1.0 and ev.f_measure == 1.0
    fr, ev = segmentation_eval([], [])
    assert (fr.tp, fr.fp, fr.fn, ev.tp, ev.fp, ev.fn) == (0,) * 6 and fr.f_measure == 0.0


def _random_events(rng, n, labels=(P, C)):
    """Sorted, non-overlapping events (one list never overlaps itself)."""
    out, t = [], 0.0
    for _ in range(n):
        a = t + rng.uniform(0.0, 0.3)
        b = a + rng.uniform(0.05, 0.5)
        out.append((float(a), float(b), str(rng.choice(labels))))
        t = b
    return out


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n_ref=st.integers(0, 8), n_pred=st.integers(0, 8))
def test_matchers_agree_with_brute_force(seed, n_ref, n_pred):
    rng = np.random.default_rng(seed)
    ref, pred = _random_events(rng, n_ref), _random_events(rng, n_pred)
    onsets = match_onsets([e[0] for e in ref], [e[0] for e in pred])
    assert onsets.tp == brute_onset_tp([e[0] for e in ref], [e[0] for e in pred], 0.15)
    ev = event_eval(ref, pred, classes=[P, C])
    assert sum(v.tp for v in ev.values()) == brute_event_tp(ref, pred, 0.1, 0.5)
    fr = frame_eval(ref, pred, 0.05, 5.0, classes=[P, C])
    for c in (P, C):
        assert (fr[c].tp, fr[c].fp, fr[c].fn) == brute_frame_counts(ref, pred, c, 0.05, 5.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n_ref=st.integers(0, 8), n_pred=st.integers(0, 8))
def test_symmetry(seed, n_ref, n_pred):
    rng = np.random.default_rng(seed)
    ref, pred = _random_events(rng, n_ref), _random_events(rng, n_pred)
    a, b = frame_eval(ref, pred, 0.01, 5.0, [P, C]), frame_eval(pred, ref, 0.01, 5.0, [P, C])
    for c in (P, C):
        assert (a[c].precision, a[c].recall) == (b[c].recall, b[c].precision)
    # duration rule is asymmetric, overlap at ratio 0 is symmetric
    a, b = event_eval(ref, pred, dur_ratio=0.0), event_eval(pred, ref, dur_ratio=0.0)
    for c in a:
        assert (a[c].precision, a[c].recall) == (b[c].recall, b[c].precision)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 8))
def test_monotonicity(seed, n):
    rng = np.random.default_rng(seed)
    ref = _random_events(rng, n)
    pred = [e for e in _random_events(rng, n)]
    base = event_eval(ref, pred, classes=[P, C])
    # a copy of an unmatched reference is a correct prediction
    rows = event_decisions(ref, pred)
    missing = [ref[i] for i, r in enumerate(rows[:len(ref)]) if r["status"] == "fn"][:1]
    more = event_eval(ref, pred + missing, classes=[P, C])
    for c in (P, C):
        assert more[c].f_measure >= base[c].f_measure - 1e-12
    spurious = event_eval(ref, pred + [(9.9, 10.0, P)], classes=[P, C])
    assert spurious[P].precision <= base[P].precision + 1e-12
    wide = event_eval(ref, pred, onset_tol=0.3, dur_ratio=0.2, classes=[P, C])
    for c in (P, C):
        assert wide[c].tp >= base[c].tp


def test_event_decisions_rows():
    rows = event_decisions([(1.0, 2.0, P), (3.0, 3.5, C)], [(1.05, 2.0, P)])
    assert [r["status"] for r in rows] == ["tp", "fn", "tp"]


def test_report_order_independent():
    a = SubjectResult("a", {P: PRF(1, 0, 0)}, {P: PRF(1, 1, 0)}, PRF(2, 0, 0))
    b = SubjectResult("b", {C: PRF(0, 2, 1)}, {C: PRF(0, 0, 1)}, PRF(1, 1, 0))
    r1, r2 = EvalReport([a, b], {"x": 1}), EvalReport([b, a], {"x": 1})
    assert r1.to_json() == r2.to_json()
    d = r1.to_dict()
    assert d["overall"]["onset"]["tp"] == 3
    assert d["overall"]["macro_event"]["absent"] == [U]
    text = r1.to_text()
    assert "macro" in text
    # the absent class is shown as "-" rather than a score of 0
    assert text.splitlines()[2].split()[-2] == "-"
