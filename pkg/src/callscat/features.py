"""Frame-level feature matrices: JTFS frames, MFCCs, context statistics, z-scoring."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .detection import mel_filterbank
from .errors import AlignmentError, ParameterError, TooShortError
from .scattering import JtfsTensor, S1Matrix
from .serialize import read_sidecar, write_sidecar
from .signal_io import AudioClip


class FeatureKind(str, enum.Enum):
    JTFS = "jtfs"
    MFCC = "mfcc"


@dataclass
class FeatureMatrix:
    vectors: np.ndarray        # [n_frames, dim]
    frame_hop: float           # seconds
    frame_times: np.ndarray    # frame centres, seconds
    kind: FeatureKind = FeatureKind.JTFS

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ParameterError("feature matrix needs at least one frame")
        if self.frame_times.shape != (self.vectors.shape[0],):
            raise AlignmentError("frame_times length differs from the number of frames")

    @property
    def n_frames(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=int)
        return FeatureMatrix(self.vectors[idx], self.frame_hop, self.frame_times[idx], self.kind)

    def save(self, stem) -> None:
        write_sidecar(stem, self.vectors, {
            "format": "callscat-features", "version": 1, "kind": self.kind.value,
            "frame_hop": self.frame_hop, "frame_times": [float(t) for t in self.frame_times]})

    @classmethod
    def load(cls, stem) -> "FeatureMatrix":
        values, h = read_sidecar(stem)
        return cls(values, h["frame_hop"], np.array(h["frame_times"]), FeatureKind(h["kind"]))


def jtfs_feature_frames(tensor: JtfsTensor, s1: S1Matrix | None = None,
                        include_s1: bool = True) -> FeatureMatrix:
    """One row per frame: JTFS paths x averaged log-frequency, then S1 bands.

    Paths are put in (v_t, v_f, theta) order whatever order the tensor holds
    them in.
    """
    order = sorted(range(len(tensor.paths)), key=lambda i: tensor.paths[i])
    vals = tensor.values[order]                      # [paths, lam, frames]
    n = tensor.n_frames
    blocks = [vals.reshape(-1, n).T]
    if include_s1:
        if s1 is None:
            raise ParameterError("include_s1 needs the first-order coefficients")
        if s1.n_frames != n or abs(s1.frame_hop - tensor.frame_hop) > 1e-12:
            raise AlignmentError(f"S1 has {s1.n_frames} frames, JTFS has {n}")
        blocks.append(s1.values.T)
    X = np.concatenate(blocks, axis=1)
    return FeatureMatrix(X, tensor.frame_hop, np.arange(n) * tensor.frame_hop, FeatureKind.JTFS)


def log_compress(fm: FeatureMatrix, eps: float) -> FeatureMatrix:
    """``log(1 + x / eps)``; maps the wide dynamic range of scattering coefficients."""
    return FeatureMatrix(np.log1p(fm.vectors / eps), fm.frame_hop, fm.frame_times, fm.kind)


def context_stats(fm: FeatureMatrix, context: int = 5) -> FeatureMatrix:
    """Mean and standard deviation over ``context`` frames centred on each
    frame; windows are clipped at the ends. Output is ``[mean | std]``."""
    if context < 1 or context % 2 == 0:
        raise ParameterError(f"context must be odd and >= 1, got {context}")
    half = context // 2
    # NaN padding makes the clipped edge windows fall out of nanmean/nanstd
    Xp = np.pad(fm.vectors, ((half, half), (0, 0)), constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(Xp, context, axis=0)  # [n, dim, context]
    mean = np.nanmean(win, axis=2)
    std = np.nanstd(win, axis=2)
    return FeatureMatrix(np.hstack([mean, std]), fm.frame_hop, fm.frame_times, fm.kind)


def mfcc(x: AudioClip, frame: float = 0.025, hop: float = 0.010, n_coeffs: int = 24,
         n_mels: int = 40, n_fft: int = 2048, floor: float = 1e-10) -> FeatureMatrix:
    """MFCCs from a Hann-windowed power spectrum, 40 mel bands over 0..sr/2,
    natural log with a floor, orthonormal DCT-II. Each frame has its DC
    offset removed before windowing. Frame ``k`` is centred at ``k * hop``
    (reflect padding)."""
    sr = x.sample_rate
    win_len = int(round(frame * sr))
    hop_len = int(round(hop * sr))
    if win_len > n_fft:
        raise ParameterError(f"frame of {win_len} samples exceeds n_fft={n_fft}")
    if len(x) < win_len:
        raise TooShortError(f"clip of {len(x)} samples is shorter than one frame ({win_len})")
    if n_coeffs > n_mels:
        raise ParameterError("n_coeffs cannot exceed n_mels")
    half = win_len // 2
    xp = np.pad(x.samples, (half, win_len), mode="reflect" if len(x) > win_len else "constant")
    n_frames = 1 + len(x) // hop_len
    idx = np.arange(win_len)[None, :] + hop_len * np.arange(n_frames)[:, None]
    frames = xp[idx]
    frames = frames - frames.mean(axis=1, keepdims=True)   # per-frame DC offset removal
    win = np.hanning(win_len + 1)[:-1]
    power = np.abs(np.fft.rfft(frames * win, n=n_fft, axis=1)) ** 2
    mel = power @ mel_filterbank(n_fft, sr, n_mels, 0.0, sr / 2)
    logmel = np.log(np.maximum(mel, floor))
    C = dct(logmel, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureMatrix(C, hop_len / sr, np.arange(n_frames) * hop_len / sr, FeatureKind.MFCC)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def flagged(self) -> bool:
        return bool(np.any(self.degenerate))


STD_FLOOR = 1e-8


def zscore_fit(train) -> NormStats:
    """Per-dimension mean/std of training rows (a FeatureMatrix, a list of
    them, or an array). Standard deviations below 1e-8 are floored and flagged."""
    if isinstance(train, FeatureMatrix):
        X = train.vectors
    elif isinstance(train, (list, tuple)) and train and isinstance(train[0], FeatureMatrix):
        X = np.vstack([f.vectors for f in train])
    else:
        X = np.asarray(train, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    degenerate = std < STD_FLOOR
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} feature dimension(s) have zero variance", stacklevel=2)
    return NormStats(mean, np.where(degenerate, STD_FLOOR, std), degenerate)


def zscore_apply(fm, stats: NormStats):
    if isinstance(fm, FeatureMatrix):
        return FeatureMatrix(zscore_apply(fm.vectors, stats), fm.frame_hop, fm.frame_times, fm.kind)
    X = np.asarray(fm, dtype=np.float64)
    if X.shape[-1] != stats.mean.size:
        raise AlignmentError(f"feature dim {X.shape[-1]} != stats dim {stats.mean.size}")
    Z = (X - stats.mean) / stats.std
    if stats.degenerate.size:
        Z[..., stats.degenerate] = 0.0
    return Z
