import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from callscat.detection import (DetectionParams, OnsetEnvelope, Segment, detect, mel_filterbank,
                                pick_peaks, save_envelope_csv, segment_calls, superflux_envelope)
from callscat.errors import ParameterError, TooShortError
from callscat.signal_io import AudioClip
from conftest import SR, chirp_clip


def test_silence_has_flat_envelope():
    env = superflux_envelope(AudioClip(np.zeros(SR), SR))
    assert np.allclose(env.values, 0.0)
    assert pick_peaks(env) == []


def test_click_is_located():
    x = np.zeros(SR)
    x[int(0.5 * SR)] = 1.0
    env = superflux_envelope(AudioClip(x, SR))
    assert abs(int(np.argmax(env.values)) - round(0.5 / env.frame_hop)) <= 1


def test_max_filter_suppresses_vibrato():
    t = np.arange(2 * SR) / SR
    phase = 2 * np.pi * (2000 * t - 300 / (2 * np.pi * 6) * np.cos(2 * np.pi * 6 * t))
    clip = AudioClip(0.5 * np.sin(phase), SR)
    inner = slice(20, -20)
    e1 = superflux_envelope(clip, max_width=1).values[inner].sum()
    e3 = superflux_envelope(clip, max_width=3).values[inner].sum()
    assert e3 <= 0.5 * e1


def test_mel_filterbank_rows_normalised():
    fb = mel_filterbank(2048, SR, 138, 27.5, 16000)
    assert fb.shape == (1025, 138)
    np.testing.assert_allclose(fb.sum(axis=0), 1.0)
    assert (fb >= 0).all()


def _env(values, hop=0.01):
    return OnsetEnvelope(np.asarray(values, dtype=float), hop)


def test_monotone_envelope_gives_at_most_one_onset():
    assert len(pick_peaks(_env(np.linspace(0, 10, 200)))) <= 1
    assert len(pick_peaks(_env(np.linspace(10, 0, 200)))) <= 1


def test_wait_merges_close_impulses():
    v = np.zeros(200)
    v[[50, 80]] = 5.0       # 300 ms apart at 10 ms hop
    assert pick_peaks(_env(v), wait=0.1) == pytest.approx([0.5, 0.8])
    assert pick_peaks(_env(v), wait=0.5) == pytest.approx([0.5])


def test_delta_gates_small_peaks():
    v = np.zeros(100)
    v[50] = 0.3
    assert pick_peaks(_env(v), delta=0.35) == []
    assert pick_peaks(_env(v), delta=0.1) == pytest.approx([0.5])


def test_negative_window_rejected():
    with pytest.raises(ParameterError):
        pick_peaks(_env(np.zeros(10)), wait=-1)


@settings(max_examples=25, deadline=None)
@given(positions=st.lists(st.integers(20, 150), min_size=1, max_size=4, unique=True),
       shift=st.integers(0, 40))
def test_peak_picking_is_translation_covariant(positions, shift):
    v = np.zeros(400)
    v[positions] = 3.0
    base = pick_peaks(_env(v))
    moved = pick_peaks(_env(np.roll(v, shift)))
    assert moved == pytest.approx([t + shift * 0.01 for t in base])


def test_silent_interval_gives_no_segment():
    x = np.zeros(SR)
    x[int(0.6 * SR):int(0.75 * SR)] = 0.3
    segs = segment_calls(AudioClip(x, SR), [0.1, 0.5])
    assert len(segs) == 1 and segs[0].start == 0.5


def test_segment_ends_with_call():
    clip = chirp_clip("up", 1500, 4000, dur=0.15, total=1.0, onset=0.3)
    segs = segment_calls(clip, [0.3])
    assert len(segs) == 1
    assert abs(segs[0].end - 0.45) <= 0.02


def test_lower_threshold_never_shortens():
    clip = chirp_clip("up", 1500, 4000, dur=0.15, total=1.0, onset=0.3)
    ends = [segment_calls(clip, [0.3], threshold_db=db)[0].end for db in (-10, -20, -30, -50)]
    assert ends == sorted(ends)


def test_detector_segments_are_disjoint_and_sorted(rng):
    x = np.zeros(2 * SR)
    for k, on in enumerate((0.2, 0.8, 1.4)):
        f0, f1 = (1500, 4000) if k % 2 else (4000, 1500)
        c = chirp_clip("up" if k % 2 else "down", f0, f1, 0.2, total=0.2, onset=0.0).samples
        x[int(on * SR):int(on * SR) + c.size] += c
    x += 1e-4 * rng.standard_normal(x.size)
    onsets, segs, env = detect(AudioClip(x, SR))
    assert onsets == sorted(onsets)
    assert all(a.end <= b.start for a, b in zip(segs, segs[1:]))
    for on in (0.2, 0.8, 1.4):
        assert min(abs(o - on) for o in onsets) <= 0.03


def test_segment_validation_and_errors(tmp_path):
    with pytest.raises(ParameterError):
        Segment(1.0, 1.0)
    with pytest.raises(ParameterError):
        segment_calls(AudioClip(np.zeros(SR), SR), [0.5, 0.2])
    with pytest.raises(TooShortError):
        superflux_envelope(AudioClip(np.zeros(100), SR))
    with pytest.raises(ParameterError):
        superflux_envelope(AudioClip(np.zeros(SR), SR), max_width=2)
    save_envelope_csv(tmp_path / "e.csv", _env([0.0, 1.0]))
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "time,strength"


def test_default_params():
    p = DetectionParams()
    assert (p.n_fft, p.hop, p.n_bands, p.max_width, p.delta) == (2048, 441, 138, 3, 0.35)
