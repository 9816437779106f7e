"""Audio and annotation I/O plus synthetic call recordings.

Recordings are mono WAV files. Annotations are CSV files with the header
``onset,offset,label`` (seconds, seconds, lowercase label). A dataset is
described by a manifest CSV with the header ``path,subject_id`` and an
optional ``annotations`` column; without it the annotation file is the WAV
path with a ``.csv`` suffix.

Synthetic calls are exponential chirps: upward sweeps stand in for pleasure
calls, downward sweeps for contact calls.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioFormatError, EmptyInputError, ParameterError, ValidationError


class Label(str, enum.Enum):
    PLEASURE = "pleasure"
    CONTACT = "contact"
    UNCERTAIN = "uncertain"
    BACKGROUND = "background"


# Annotated call types, in the fixed order used for tie-breaks and reports.
CALL_TYPES = (Label.CONTACT, Label.PLEASURE, Label.UNCERTAIN)


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError("AudioClip must be mono (1-D samples)")
        if samples.size == 0:
            raise EmptyInputError("AudioClip has no samples")
        if int(self.sample_rate) <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, order=True)
class CallEvent:
    onset: float
    offset: float
    label: Label

    def __post_init__(self):
        label = Label(self.label)
        if label is Label.BACKGROUND:
            raise ValidationError("background is not an annotated call type")
        if not (0.0 <= self.onset < self.offset):
            raise ValidationError(
                f"event needs 0 <= onset < offset, got ({self.onset}, {self.offset})"
            )
        object.__setattr__(self, "label", label)

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass
class AnnotationSet:
    subject_id: str
    events: list[CallEvent] = field(default_factory=list)
    duration: float | None = None

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: (e.onset, e.offset))
        last_offset = max((e.offset for e in self.events), default=0.0)
        if self.duration is None:
            self.duration = last_offset
        elif last_offset > self.duration + 1e-9:
            raise ValidationError(
                f"event offset {last_offset} exceeds recording duration {self.duration}"
            )

    def __len__(self):
        return len(self.events)

    def of_type(self, label: Label) -> list[CallEvent]:
        return [e for e in self.events if e.label is Label(label)]


@dataclass(frozen=True)
class SynthCallSpec:
    direction: Direction
    f_start: float
    f_end: float
    duration: float
    amplitude: float
    onset: float = 0.0

    def __post_init__(self):
        direction = Direction(self.direction)
        object.__setattr__(self, "direction", direction)
        if self.duration <= 0:
            raise ParameterError(f"duration must be positive, got {self.duration}")
        if self.f_start <= 0 or self.f_end <= 0:
            raise ParameterError("f_start and f_end must be positive")
        if direction is Direction.UP and not self.f_end > self.f_start:
            raise ParameterError("direction 'up' requires f_end > f_start")
        if direction is Direction.DOWN and not self.f_end < self.f_start:
            raise ParameterError("direction 'down' requires f_end < f_start")
        if self.amplitude < 0:
            raise ParameterError("amplitude must be non-negative")
        if self.onset < 0:
            raise ParameterError("onset must be non-negative")

    @property
    def offset(self) -> float:
        return self.onset + self.duration

    @property
    def label(self) -> Label:
        return Label.PLEASURE if self.direction is Direction.UP else Label.CONTACT


# --------------------------------------------------------------------------- audio

def load_audio(path, target_rate: int | None = None) -> AudioClip:
    """Read a PCM or float WAV file as a mono clip.

    Multichannel input is averaged across channels. If ``target_rate`` is
    given and differs from the file rate, the samples are resampled with a
    polyphase band-limited filter.
    """
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError/struct errors on bad files
        raise AudioFormatError(f"cannot read WAV file {path}: {exc}") from exc

    if data.size == 0:
        raise EmptyInputError(f"{path} contains no samples")
    x = _to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if target_rate is not None and int(target_rate) != rate:
        x = _resample(x, rate, int(target_rate))
        rate = int(target_rate)
    return AudioClip(x, rate)


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit PCM into int32
        return data.astype(np.float64) / 2147483648.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise AudioFormatError(f"unsupported sample type {data.dtype}")


def _resample(x: np.ndarray, rate: int, target: int) -> np.ndarray:
    g = math.gcd(rate, target)
    return resample_poly(x, target // g, rate // g, axis=0)


def save_audio(path, clip: AudioClip, subtype: str = "pcm16") -> None:
    """Write a clip as WAV; ``subtype`` is ``'pcm16'`` or ``'float'``."""
    x = clip.samples
    if subtype == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif subtype == "float":
        data = x.astype(np.float32)
    else:
        raise ParameterError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(str(path), clip.sample_rate, data)


# --------------------------------------------------------------------- annotations

def subject_from_path(path) -> str:
    """Subject id from a ``<subject>__<take>.<ext>`` file name."""
    return Path(path).stem.split("__")[0]


def load_annotations(path, subject_id: str | None = None,
                     duration: float | None = None) -> AnnotationSet:
    path = Path(path)
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["onset", "offset", "label"]:
            raise ValidationError(f"{path}: header must be 'onset,offset,label'")
        for lineno, row in enumerate(reader, start=2):
            try:
                onset = float(row["onset"])
                offset = float(row["offset"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: onset/offset must be numbers") from None
            label = (row["label"] or "").strip().lower()
            if label not in {t.value for t in CALL_TYPES}:
                raise ValidationError(f"{path}:{lineno}: unknown label {label!r}")
            if offset <= onset:
                raise ValidationError(
                    f"{path}:{lineno}: offset {offset} must exceed onset {onset}"
                )
            try:
                events.append(CallEvent(onset, offset, Label(label)))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return AnnotationSet(subject_id or subject_from_path(path), events, duration)


def save_events_csv(path, events: Iterable[CallEvent]) -> None:
    """Write events in the annotation format (also used for predictions)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["onset", "offset", "label"])
        for e in events:
            w.writerow([_fmt(e.onset), _fmt(e.offset), Label(e.label).value])


def _fmt(t: float) -> str:
    return f"{t:.6f}"


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    subject_id: str
    annotations: Path


def load_manifest(path) -> list[ManifestEntry]:
    """Read a ``path,subject_id[,annotations]`` manifest; paths are relative to it."""
    path = Path(path)
    root = path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if fields[:2] != ["path", "subject_id"]:
            raise ValidationError(f"{path}: header must start with 'path,subject_id'")
        for lineno, row in enumerate(reader, start=2):
            wav = root / row["path"].strip()
            subject = (row.get("subject_id") or "").strip() or subject_from_path(wav)
            ann = (row.get("annotations") or "").strip()
            ann_path = root / ann if ann else wav.with_suffix(".csv")
            entries.append(ManifestEntry(wav, subject, ann_path))
    if not entries:
        raise EmptyInputError(f"{path}: manifest lists no recordings")
    return entries


def save_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    root = Path(path).parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "subject_id", "annotations"])
        for e in entries:
            w.writerow([_rel(e.path, root), e.subject_id, _rel(e.annotations, root)])


def _rel(p: Path, root: Path) -> str:
    try:
        return str(Path(p).relative_to(root))
    except ValueError:
        return str(p)


# ------------------------------------------------------------------------- synthesis

def synth_call(spec: SynthCallSpec, sample_rate: int, fade_fraction: float = 0.2) -> AudioClip:
    """Render one exponential chirp with Hann fades at both ends.

    The instantaneous frequency is ``f_start * (f_end/f_start) ** (t/duration)``.
    ``fade_fraction`` is the share of the duration taken by each fade. The
    peak absolute sample equals ``spec.amplitude``.
    """
    nyq = sample_rate / 2.0
    for name in ("f_start", "f_end"):
        f = getattr(spec, name)
        if not 0.0 < f < nyq:
            raise ParameterError(f"{name}={f} Hz outside (0, {nyq}) Hz")
    if not 0.0 <= fade_fraction <= 0.5:
        raise ParameterError("fade_fraction must lie in [0, 0.5]")

    n = max(1, int(round(spec.duration * sample_rate)))
    if spec.amplitude == 0:
        return AudioClip(np.zeros(n), sample_rate)

    t = np.arange(n) / sample_rate
    k = spec.f_end / spec.f_start
    rate = math.log(k) / spec.duration
    phase = 2 * np.pi * spec.f_start * np.expm1(rate * t) / rate
    x = np.sin(phase) * _fade_envelope(n, int(round(fade_fraction * n)))
    peak = np.max(np.abs(x))
    return AudioClip(spec.amplitude * x / peak, sample_rate)


def _fade_envelope(n: int, n_fade: int) -> np.ndarray:
    env = np.ones(n)
    if n_fade > 0:
        ramp = np.sin(0.5 * np.pi * (np.arange(n_fade) + 0.5) / n_fade) ** 2
        env[:n_fade] = ramp
        env[n - n_fade:] = ramp[::-1]
    return env


def synth_recording(specs: Sequence[SynthCallSpec], total_duration: float,
                    noise_db: float, sample_rate: int, seed: int = 0,
                    subject_id: str = "synth",
                    fade_fraction: float = 0.2) -> tuple[AudioClip, AnnotationSet]:
    """Place calls at their onsets over white noise of RMS ``noise_db`` dBFS.

    Calls must fit in the recording and must not overlap.
    """
    if total_duration <= 0:
        raise ParameterError("total_duration must be positive")
    ordered = sorted(specs, key=lambda s: s.onset)
    for s in ordered:
        if s.offset > total_duration + 1e-12:
            raise ParameterError(
                f"call at {s.onset:.3f}s ends after the recording ({total_duration}s)"
            )
    for a, b in zip(ordered, ordered[1:]):
        if b.onset < a.offset:
            raise ParameterError(
                f"calls at {a.onset:.3f}s and {b.onset:.3f}s overlap"
            )

    n = int(round(total_duration * sample_rate))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) * 10.0 ** (noise_db / 20.0)
    events = []
    for s in ordered:
        call = synth_call(s, sample_rate, fade_fraction).samples
        i0 = int(round(s.onset * sample_rate))
        seg = call[: max(0, n - i0)]
        x[i0:i0 + seg.size] += seg
        events.append(CallEvent(s.onset, s.offset, s.label))
    return AudioClip(x, sample_rate), AnnotationSet(subject_id, events, total_duration)


@dataclass(frozen=True)
class CallStyle:
    """Random ranges for one synthetic call type (start frequency, sweep
    ratio end/start, duration, linear peak amplitude)."""
    direction: Direction
    f_start: tuple[float, float]
    ratio: tuple[float, float]
    duration: tuple[float, float]
    amplitude: tuple[float, float]

    def draw(self, rng: np.random.Generator, onset: float, gain: float = 1.0) -> SynthCallSpec:
        f0 = rng.uniform(*self.f_start)
        return SynthCallSpec(
            direction=self.direction,
            f_start=f0,
            f_end=f0 * rng.uniform(*self.ratio),
            duration=rng.uniform(*self.duration),
            amplitude=min(1.0, gain * rng.uniform(*self.amplitude)),
            onset=onset,
        )


# Pleasure calls: rising, soft, short, starting high. Contact calls: falling,
# loud, long, reaching low.
PLEASURE_STYLE = CallStyle(Direction.UP, (2800.0, 3800.0), (1.25, 1.5), (0.10, 0.20), (0.08, 0.25))
CONTACT_STYLE = CallStyle(Direction.DOWN, (3200.0, 4400.0), (0.55, 0.75), (0.20, 0.40), (0.25, 0.70))


def random_call_specs(n_calls: int, rng: np.random.Generator,
                      p_pleasure: float = 0.5,
                      gap: tuple[float, float] = (0.4, 1.2),
                      lead: float = 0.5, gain_db: float = 0.0,
                      pleasure: CallStyle = PLEASURE_STYLE,
                      contact: CallStyle = CONTACT_STYLE) -> tuple[list[SynthCallSpec], float]:
    """Draw ``n_calls`` sequential, non-overlapping calls.

    Returns the specs and a total duration leaving ``lead`` seconds of
    silence at both ends.
    """
    gain = 10.0 ** (gain_db / 20.0)
    specs = []
    t = lead
    for _ in range(n_calls):
        style = pleasure if rng.random() < p_pleasure else contact
        s = style.draw(rng, onset=round(t, 4), gain=gain)
        specs.append(s)
        t = s.offset + rng.uniform(*gap)
    total = (specs[-1].offset if specs else 0.0) + lead
    return specs, float(np.ceil(total * 10.0) / 10.0)


def _scaled(style: CallStyle, factor: float) -> CallStyle:
    return replace(style, f_start=(style.f_start[0] * factor, style.f_start[1] * factor))


def synth_subject(subject_id: str, n_calls: int, seed: int, noise_db: float = -60.0,
                  sample_rate: int = 44100, p_pleasure: float = 0.5,
                  gap: tuple[float, float] = (0.4, 1.2),
                  gain_db: tuple[float, float] = (-6.0, 0.0),
                  pitch: tuple[float, float] = (0.9, 1.1)) -> tuple[AudioClip, AnnotationSet]:
    """One synthetic subject: a recording with its own level and voice pitch.

    The subject's gain (dB) and pitch factor are drawn once from the given
    ranges and applied to every call it makes.
    """
    rng = np.random.default_rng(seed)
    g = rng.uniform(*gain_db)
    k = rng.uniform(*pitch)
    specs, total = random_call_specs(n_calls, rng, p_pleasure, gap, gain_db=g,
                                     pleasure=_scaled(PLEASURE_STYLE, k),
                                     contact=_scaled(CONTACT_STYLE, k))
    return synth_recording(specs, total, noise_db, sample_rate, seed=int(rng.integers(2 ** 31)),
                           subject_id=subject_id)
