import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile
from scipy.signal import hilbert, stft

from callscat.errors import AudioFormatError, EmptyInputError, ParameterError, ValidationError
from callscat.signal_io import (AnnotationSet, AudioClip, CallEvent, Direction, Label, ManifestEntry,
                                SynthCallSpec, load_annotations, load_audio, load_manifest,
                                random_call_specs, save_audio, save_events_csv, save_manifest,
                                subject_from_path, synth_call, synth_recording, synth_subject)

SR = 44100


def test_zero_wav_loads_as_zero_clip(tmp_path):
    wavfile.write(tmp_path / "z.wav", SR, np.zeros(SR, dtype=np.int16))
    clip = load_audio(tmp_path / "z.wav", SR)
    assert clip.sample_rate == SR and len(clip) == SR
    assert not clip.samples.any()


def test_stereo_is_channel_mean(tmp_path, rng):
    data = rng.uniform(-0.5, 0.5, size=(1000, 2)).astype(np.float32)
    wavfile.write(tmp_path / "s.wav", SR, data)
    clip = load_audio(tmp_path / "s.wav")
    expected = (data[:, 0].astype(np.float64) + data[:, 1].astype(np.float64)) / 2
    np.testing.assert_allclose(clip.samples, expected, rtol=0, atol=1e-7)


def test_resample_doubles_length_and_keeps_tone(tmp_path):
    sr = 22050
    t = np.arange(sr) / sr
    tone = 0.5 * np.sin(2 * np.pi * 1000.0 * t)
    wavfile.write(tmp_path / "r.wav", sr, tone.astype(np.float32))
    clip = load_audio(tmp_path / "r.wav", 44100)
    assert abs(len(clip) - 2 * sr) <= 1
    # amplitude of the 1 kHz tone in the middle of the clip
    mid = clip.samples[11025:11025 + 44100 // 2]
    spec = np.abs(np.fft.rfft(mid * np.hanning(mid.size)))
    ref = np.abs(np.fft.rfft(0.5 * np.sin(2 * np.pi * 1000.0 * np.arange(mid.size) / 44100) * np.hanning(mid.size)))
    assert abs(20 * np.log10(spec.max() / ref.max())) < 0.5


def test_pcm16_round_trip_within_one_lsb(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 5000)
    save_audio(tmp_path / "a.wav", AudioClip(x, SR))
    y = load_audio(tmp_path / "a.wav").samples
    assert np.max(np.abs(x - y)) <= 1 / 32768


def test_load_errors(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(AudioFormatError):
        load_audio(tmp_path / "bad.wav")
    wavfile.write(tmp_path / "empty.wav", SR, np.zeros(0, dtype=np.int16))
    with pytest.raises(EmptyInputError):
        load_audio(tmp_path / "empty.wav")
    with pytest.raises(FileNotFoundError):
        load_audio(tmp_path / "missing.wav")


def _csv(path, rows):
    path.write_text("onset,offset,label\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows))
    return path


def test_annotations_header_only(tmp_path):
    ann = load_annotations(_csv(tmp_path / "chick1__a.csv", []))
    assert len(ann) == 0 and ann.subject_id == "chick1"


def test_annotations_sorted(tmp_path):
    ann = load_annotations(_csv(tmp_path / "x.csv", [(0.5, 0.6, "pleasure"), (0.1, 0.3, "contact")]))
    assert [e.onset for e in ann.events] == [0.1, 0.5]
    assert ann.events[0].label is Label.CONTACT


def test_annotation_row_errors_name_the_row(tmp_path):
    with pytest.raises(ValidationError, match=":3:"):
        load_annotations(_csv(tmp_path / "x.csv", [(0.1, 0.2, "contact"), (1.0, 0.9, "contact")]))
    with pytest.raises(ValidationError, match="unknown label"):
        load_annotations(_csv(tmp_path / "y.csv", [(0.1, 0.2, "chirp")]))


def test_events_csv_round_trip(tmp_path):
    events = [CallEvent(0.25, 0.5, Label.PLEASURE), CallEvent(1.0, 1.75, Label.UNCERTAIN)]
    save_events_csv(tmp_path / "e.csv", events)
    assert load_annotations(tmp_path / "e.csv").events == events


def test_subject_and_manifest(tmp_path):
    assert subject_from_path("/data/chick07__take2.wav") == "chick07"
    entries = [ManifestEntry(tmp_path / "a.wav", "s1", tmp_path / "a.csv"),
               ManifestEntry(tmp_path / "sub" / "b.wav", "s2", tmp_path / "sub" / "b.csv")]
    save_manifest(tmp_path / "m.csv", entries)
    assert load_manifest(tmp_path / "m.csv") == entries


def _inst_freq(x, sr):
    phase = np.unwrap(np.angle(hilbert(x)))
    return np.diff(phase) * sr / (2 * np.pi)


def test_chirp_starts_at_f_start():
    clip = synth_call(SynthCallSpec(Direction.UP, 2500.0, 3800.0, 0.15, 0.2), SR)
    f = _inst_freq(clip.samples, SR)
    # average over the first few ms, away from the analytic-signal edge effect
    start = np.median(f[int(0.002 * SR):int(0.006 * SR)])
    assert abs(start - 2500.0) / 2500.0 < 0.02
    assert abs(np.max(np.abs(clip.samples)) - 0.2) < 1e-12


def test_zero_amplitude_chirp_is_silent():
    clip = synth_call(SynthCallSpec(Direction.UP, 2500.0, 3800.0, 0.15, 0.0), SR)
    assert not clip.samples.any()


def test_down_chirp_centroid_decreases():
    clip = synth_call(SynthCallSpec(Direction.DOWN, 3500.0, 2200.0, 0.35, 0.8), SR)
    f, _, Z = stft(clip.samples, SR, nperseg=1024, noverlap=768, boundary=None, padded=False)
    P = np.abs(Z) ** 2
    centroid = (f[:, None] * P).sum(0) / P.sum(0)
    assert np.all(np.diff(centroid) < 0)


def test_spec_invariants():
    with pytest.raises(ParameterError):
        SynthCallSpec(Direction.UP, 3000.0, 2000.0, 0.1, 0.5)
    with pytest.raises(ParameterError):
        synth_call(SynthCallSpec(Direction.UP, 3000.0, 30000.0, 0.1, 0.5), SR)


def test_noise_only_recording_level():
    clip, ann = synth_recording([], 5.0, -80.0, SR, seed=3)
    assert len(ann) == 0
    rms_db = 20 * np.log10(np.sqrt(np.mean(clip.samples ** 2)))
    assert abs(rms_db + 80.0) < 1.0


def test_recording_places_calls_and_rejects_overlap():
    specs = [SynthCallSpec(Direction.UP, 2500, 3500, 0.1, 0.3, onset=t) for t in (0.5, 1.0, 2.0)]
    _, ann = synth_recording(specs, 3.0, -60.0, SR)
    assert [e.onset for e in ann.events] == [0.5, 1.0, 2.0]
    assert all(e.label is Label.PLEASURE for e in ann.events)
    with pytest.raises(ParameterError):
        synth_recording([SynthCallSpec(Direction.UP, 2500, 3500, 0.3, 0.3, onset=0.5),
                         SynthCallSpec(Direction.DOWN, 3500, 2500, 0.3, 0.3, onset=0.7)], 3.0, -60.0, SR)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(0, 8), seed=st.integers(0, 10 ** 6))
def test_random_recordings_sorted_disjoint_and_audible(n, seed):
    rng = np.random.default_rng(seed)
    specs, total = random_call_specs(n, rng, gap=(0.3, 0.6))
    clip, ann = synth_recording(specs, total, -60.0, SR, seed=seed)
    ev = ann.events
    assert all(a.offset <= b.onset for a, b in zip(ev, ev[1:]))
    assert all(e.offset <= ann.duration for e in ev)
    x = clip.samples
    for e in ev:
        a, b = int(e.onset * SR), int(e.offset * SR)
        call = np.mean(x[a:b] ** 2)
        # equally long span of pure noise at the start (before the first call)
        quiet = np.mean(x[:b - a] ** 2)
        assert 10 * np.log10(call / quiet) >= 20.0


def test_synth_subject_is_deterministic():
    a, aa = synth_subject("s", 5, seed=9)
    b, bb = synth_subject("s", 5, seed=9)
    assert np.array_equal(a.samples, b.samples) and aa.events == bb.events
    assert len(aa) == 5
