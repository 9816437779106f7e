"""Pipeline configuration: one versioned YAML document, one section per module.

Every key has a default; a file only needs the keys it changes. Unknown
keys are rejected. ``--set section.key=value`` overrides are parsed as
YAML scalars or lists.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .detection import DetectionParams
from .errors import ValidationError
from .scattering import ScatteringParams

VERSION = 1
SCHEMES = ("scat-only", "seg-scat", "mfcc-only", "seg-mfcc")


@dataclass(frozen=True)
class FeatureParams:
    include_s1: bool = True
    context: int = 5
    log_eps: float | None = None        # log(1 + x/eps) on JTFS rows when set
    mfcc_frame: float = 0.025
    mfcc_hop: float = 0.010
    mfcc_coeffs: int = 24
    mfcc_mels: int = 40
    mfcc_context: bool = True


@dataclass(frozen=True)
class ClassifierParams:
    C_grid: tuple[float, ...] = (1.0, 10.0, 100.0)
    gamma_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    tol: float = 1e-3
    max_iter: int = 100_000
    cache_mb: float = 256.0
    n_folds: int = 3


@dataclass(frozen=True)
class EvalParams:
    onset_window: float = 0.15
    onset_tol: float = 0.10
    dur_ratio: float = 0.5
    event_mode: str = "duration"
    frame_grid: float = 0.01


@dataclass(frozen=True)
class SynthParams:
    n_subjects: int = 1
    n_calls: int = 10
    noise_db: float = -60.0
    sample_rate: int = 44100
    p_pleasure: float = 0.5
    gap: tuple[float, float] = (0.4, 1.2)


@dataclass(frozen=True)
class RunParams:
    scheme: str = "seg-scat"
    annotated_segments: bool = False
    run_dir: str = "runs"


@dataclass(frozen=True)
class PipelineConfig:
    version: int = VERSION
    seed: int = 0
    scattering: ScatteringParams = field(default_factory=ScatteringParams)
    detection: DetectionParams = field(default_factory=DetectionParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    classifier: ClassifierParams = field(default_factory=ClassifierParams)
    evaluation: EvalParams = field(default_factory=EvalParams)
    synth: SynthParams = field(default_factory=SynthParams)
    run: RunParams = field(default_factory=RunParams)

    # ---------------------------------------------------------- conversion
    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    @classmethod
    def from_dict(cls, data: dict | None) -> "PipelineConfig":
        data = dict(data or {})
        version = data.get("version", VERSION)
        if version != VERSION:
            raise ValidationError(f"config version {version} is not supported (expected {VERSION})")
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    def with_overrides(self, items) -> "PipelineConfig":
        d = self.to_dict()
        for item in items or ():
            if "=" not in item:
                raise ValidationError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            parts = key.strip().split(".")
            node = d
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ValidationError(f"unknown config key {key!r}")
                node = node[p]
            if parts[-1] not in node or isinstance(node[parts[-1]], dict):
                raise ValidationError(f"unknown config key {key!r}")
            node[parts[-1]] = yaml.safe_load(raw)
        return PipelineConfig.from_dict(d)

    def digest(self) -> str:
        """Hash of every setting that influences results (not the run directory)."""
        d = self.to_dict()
        d["run"].pop("run_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    # ---------------------------------------------------------- validation
    def validate(self) -> None:
        s, dt, f, c, e, sy, r = (self.scattering, self.detection, self.features, self.classifier,
                                 self.evaluation, self.synth, self.run)
        checks = [
            ("scattering.T", s.T > 0 and s.T & (s.T - 1) == 0, "must be a power of two"),
            ("scattering.alpha", 0 <= s.alpha < int(math.log2(max(s.T, 1))), "must be in [0, log2 T)"),
            ("scattering.scal_hop", s.scal_hop > 0 and s.T % s.scal_hop == 0
             and (s.T >> s.alpha) % s.scal_hop == 0, "must divide T / 2**alpha"),
            ("scattering.Q1", s.Q1 >= 1, "must be >= 1"),
            ("scattering.J1", s.J1 >= 1, "must be >= 1"),
            ("scattering.Q2", s.Q2 >= 1, "must be >= 1"),
            ("scattering.J2", s.J2 is None or s.J2 >= 1, "must be >= 1 or null"),
            ("scattering.Q_fr", s.Q_fr >= 1, "must be >= 1"),
            ("scattering.J_fr", s.J_fr >= 1, "must be >= 1"),
            ("scattering.F", s.F is None or s.F >= 1, "must be >= 1 or null"),
            ("scattering.mod_band", len(s.mod_band) == 2 and 0 <= s.mod_band[0] < s.mod_band[1],
             "must be [lo, hi] with 0 <= lo < hi"),
            ("scattering.sample_rate", s.sample_rate > 0, "must be positive"),
            ("detection.hop", dt.hop > 0 and dt.n_fft >= dt.hop, "must satisfy 0 < hop <= n_fft"),
            ("detection.fmax", 0 < dt.fmin < dt.fmax <= s.sample_rate / 2, "needs 0 < fmin < fmax <= sr/2"),
            ("detection.delta", dt.delta >= 0, "must be >= 0"),
            ("detection.max_width", dt.max_width >= 1 and dt.lag >= 1, "max_width and lag must be >= 1"),
            ("detection.threshold_db", dt.threshold_db < 0, "must be negative (relative dB)"),
            ("features.context", f.context >= 1 and f.context % 2 == 1, "must be odd and >= 1"),
            ("features.log_eps", f.log_eps is None or f.log_eps > 0, "must be positive or null"),
            ("features.mfcc_coeffs", 1 <= f.mfcc_coeffs <= f.mfcc_mels, "must be in [1, mfcc_mels]"),
            ("features.mfcc_hop", 0 < f.mfcc_hop and 0 < f.mfcc_frame, "frame and hop must be positive"),
            ("classifier.C_grid", len(c.C_grid) > 0 and all(v > 0 for v in c.C_grid), "must be non-empty, positive"),
            ("classifier.gamma_grid", len(c.gamma_grid) > 0 and all(v > 0 for v in c.gamma_grid),
             "must be non-empty, positive"),
            ("classifier.tol", c.tol > 0, "must be positive"),
            ("classifier.max_iter", c.max_iter >= 1, "must be >= 1"),
            ("classifier.n_folds", c.n_folds >= 2, "must be >= 2"),
            ("evaluation.event_mode", e.event_mode in ("duration", "overlap"), "must be duration or overlap"),
            ("evaluation.frame_grid", e.frame_grid > 0, "must be positive"),
            ("evaluation.onset_window", e.onset_window >= 0 and e.onset_tol >= 0 and e.dur_ratio >= 0,
             "tolerances must be >= 0"),
            ("synth.n_subjects", sy.n_subjects >= 1, "must be >= 1"),
            ("synth.n_calls", sy.n_calls >= 0, "must be >= 0"),
            ("synth.gap", len(sy.gap) == 2 and 0 <= sy.gap[0] <= sy.gap[1], "must be [lo, hi] with 0 <= lo <= hi"),
            ("synth.p_pleasure", 0 <= sy.p_pleasure <= 1, "must be in [0, 1]"),
            ("synth.sample_rate", sy.sample_rate == s.sample_rate, "must equal scattering.sample_rate"),
            ("run.scheme", r.scheme in SCHEMES, f"must be one of {', '.join(SCHEMES)}"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ValidationError(f"{key}: {msg}")


def _coerce(tp, value, key):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if value is None:
        if type(None) in args:
            return None
        raise ValidationError(f"{key}: must not be null")
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(inner, value, key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{key}: expected a list")
        elem = args[0]
        return tuple(_coerce(elem, v, key) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"{key}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{key}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{key}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ValidationError(f"{key}: expected a string")
        return value
    return value


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{prefix.rstrip('.') or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kw = {}
    for name in names:
        if name not in data:
            continue
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kw[name] = _build(tp, data[name], f"{prefix}{name}.")
        else:
            kw[name] = _coerce(tp, data[name], prefix + name)
    return cls(**kw)


def load_config(path=None, overrides=None) -> PipelineConfig:
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: not valid YAML ({exc})") from exc
    cfg = PipelineConfig.from_dict(data)
    return cfg.with_overrides(overrides) if overrides else cfg


def describe_keys() -> str:
    """Every config key with its default, one per line."""
    lines = []

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                walk(v, f"{prefix}{f.name}.")
            else:
                shown = json.dumps(list(v) if isinstance(v, tuple) else v)
                lines.append(f"  {prefix}{f.name} = {shown}")
    walk(PipelineConfig(), "")
    return "\n".join(lines)
