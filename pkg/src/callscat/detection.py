"""SuperFlux onset detection and energy-based call segmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d, uniform_filter1d

from .errors import ParameterError, TooShortError
from .signal_io import AudioClip


@dataclass
class OnsetEnvelope:
    values: np.ndarray   # onset strength per frame
    frame_hop: float     # seconds; frame k is centred at k * frame_hop

    @property
    def times(self):
        return np.arange(len(self.values)) * self.frame_hop


@dataclass(frozen=True, order=True)
class Segment:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ParameterError(f"segment needs start < end, got ({self.start}, {self.end})")


@dataclass(frozen=True)
class DetectionParams:
    n_fft: int = 2048
    hop: int = 441
    n_bands: int = 138
    fmin: float = 27.5
    fmax: float = 16000.0
    max_width: int = 3
    lag: int = 1
    pre_max: float = 0.03
    post_max: float = 0.03
    pre_avg: float = 0.10
    post_avg: float = 0.10
    delta: float = 0.35
    wait: float = 0.03
    threshold_db: float = -30.0
    rms_window: float = 0.025
    rms_hop: float = 0.010


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int, sr: int, n_bands: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters with mel-spaced centres, each normalised to unit sum.

    Returns ``[n_bins, n_bands]``. Filters narrower than one FFT bin collapse
    onto the nearest bin so that no band is empty.
    """
    fmax = min(fmax, sr / 2)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_bands + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sr)
    fb = np.zeros((freqs.size, n_bands))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        w = np.clip(np.minimum(up, down), 0.0, None)
        if w.sum() <= 0:
            w[np.argmin(np.abs(freqs - mid))] = 1.0
        fb[:, b] = w / w.sum()
    return fb


def stft_magnitude(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """|STFT| with a Hann window and frames centred at ``k * hop`` (zero-padded)."""
    xp = np.pad(x, n_fft // 2)
    n_frames = 1 + len(x) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    xp = np.pad(xp, (0, max(0, idx[-1, -1] + 1 - xp.size)))
    win = np.hanning(n_fft + 1)[:-1]
    return np.abs(np.fft.rfft(xp[idx] * win, axis=1))


def superflux_envelope(x: AudioClip, n_fft: int = 2048, hop: int = 441, n_bands: int = 138,
                       max_width: int = 3, lag: int = 1, fmin: float = 27.5,
                       fmax: float = 16000.0) -> OnsetEnvelope:
    """Sum over bands of positive log-magnitude increases against the
    frequency-maximum-filtered spectrum ``lag`` frames earlier."""
    if not 0 < hop < n_fft:
        raise ParameterError(f"need 0 < hop < n_fft, got hop={hop}, n_fft={n_fft}")
    if max_width < 1 or max_width % 2 == 0:
        raise ParameterError(f"max_width must be odd and >= 1, got {max_width}")
    if len(x) < n_fft:
        raise TooShortError(f"clip of {len(x)} samples is shorter than n_fft={n_fft}")
    mag = stft_magnitude(x.samples, n_fft, hop)
    bands = np.log10(1.0 + mag @ mel_filterbank(n_fft, x.sample_rate, n_bands, fmin, fmax))
    ref = maximum_filter1d(bands, size=max_width, axis=1, mode="nearest")
    diff = np.zeros(len(bands))
    diff[lag:] = np.clip(bands[lag:] - ref[:-lag], 0.0, None).sum(axis=1)
    return OnsetEnvelope(diff, hop / x.sample_rate)


def pick_peaks(env: OnsetEnvelope, pre_max: float = 0.03, post_max: float = 0.03,
               pre_avg: float = 0.10, post_avg: float = 0.10, delta: float = 0.35,
               wait: float = 0.03) -> list[float]:
    """Onset times (s) of frames that are the local maximum, exceed the local
    mean by more than ``delta`` and come ``wait`` after the previous onset.

    Window lengths are in seconds and rounded to whole frames.
    """
    for name, v in (("pre_max", pre_max), ("post_max", post_max), ("pre_avg", pre_avg),
                    ("post_avg", post_avg), ("wait", wait)):
        if v < 0:
            raise ParameterError(f"{name} must be >= 0")
    h = env.frame_hop
    fr = lambda s: int(round(s / h))  # noqa: E731
    v = np.asarray(env.values, dtype=np.float64)
    n = v.size
    if n == 0:
        return []
    a, b = fr(pre_max), fr(post_max)
    c, d = fr(pre_avg), fr(post_avg)
    # sliding max over [t - a, t + b] and mean over [t - c, t + d], clipped at the ends
    padded = np.pad(v, (a, b), constant_values=-np.inf)
    mx = np.lib.stride_tricks.sliding_window_view(padded, a + b + 1).max(axis=1)
    csum = np.concatenate([[0.0], np.cumsum(v)])
    lo = np.clip(np.arange(n) - c, 0, n)
    hi = np.clip(np.arange(n) + d + 1, 0, n)
    mean = (csum[hi] - csum[lo]) / (hi - lo)
    cand = np.flatnonzero((v >= mx) & (v > mean + delta))
    out, last = [], None
    w = fr(wait)
    for t in cand:
        if last is None or t - last >= w:
            out.append(t * h)
            last = t
    return out


def short_time_rms(x: np.ndarray, sr: int, window: float = 0.025, hop: float = 0.010):
    """RMS over ``window`` seconds every ``hop`` seconds; returns (rms, frame centres)."""
    w = max(1, int(round(window * sr)))
    hp = max(1, int(round(hop * sr)))
    n_frames = max(1, 1 + (len(x) - w) // hp) if len(x) >= w else 1
    power = uniform_filter1d(np.asarray(x, dtype=np.float64) ** 2, w, mode="constant",
                             origin=-(w // 2))
    starts = np.arange(n_frames) * hp
    rms = np.sqrt(np.clip(power[starts], 0.0, None))
    centres = (starts + w / 2) / sr
    return rms, centres


def segment_calls(x: AudioClip, onsets, threshold_db: float = -30.0, window: float = 0.025,
                  hop: float = 0.010) -> list[Segment]:
    """One segment per inter-onset interval, from its onset to the end of the
    above-threshold run that holds the interval's loudest frame.

    The threshold is relative to that loudest frame. The last interval runs
    to the end of the clip; silent intervals give no segment.
    """
    onsets = [float(t) for t in onsets]
    if any(b < a for a, b in zip(onsets, onsets[1:])):
        raise ParameterError("onsets must be sorted")
    rms, centres = short_time_rms(x.samples, x.sample_rate, window, hop)
    ratio = 10.0 ** (threshold_db / 20.0)
    out = []
    bounds = onsets + [x.duration]
    for start, stop in zip(bounds[:-1], bounds[1:]):
        idx = np.flatnonzero((centres >= start) & (centres < stop))
        if idx.size == 0:
            continue
        r = rms[idx]
        peak = r.max()
        if peak <= 0:
            continue
        above = r >= peak * ratio
        k = int(np.argmax(r))
        while k + 1 < r.size and above[k + 1]:
            k += 1
        end = min(centres[idx[k]] + hop / 2, stop)
        if end > start:
            out.append(Segment(start, end))
    return out


def detect(x: AudioClip, p: DetectionParams = DetectionParams()):
    """Full detector: (onset times, segments, envelope)."""
    env = superflux_envelope(x, p.n_fft, p.hop, p.n_bands, p.max_width, p.lag, p.fmin, p.fmax)
    onsets = pick_peaks(env, p.pre_max, p.post_max, p.pre_avg, p.post_avg, p.delta, p.wait)
    segs = segment_calls(x, onsets, p.threshold_db, p.rms_window, p.rms_hop)
    return onsets, segs, env


def save_onsets_csv(path, onsets) -> None:
    with open(path, "w") as fh:
        fh.write("onset\n")
        for t in onsets:
            fh.write(f"{t:.6f}\n")


def save_segments_csv(path, segments) -> None:
    with open(path, "w") as fh:
        fh.write("start,end\n")
        for s in segments:
            fh.write(f"{s.start:.6f},{s.end:.6f}\n")


def save_envelope_csv(path, env: OnsetEnvelope) -> None:
    with open(path, "w") as fh:
        fh.write("time,strength\n")
        for t, v in zip(env.times, env.values):
            fh.write(f"{t:.6f},{v:.9g}\n")
