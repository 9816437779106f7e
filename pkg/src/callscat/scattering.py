"""Scalogram, first-order scattering and joint time-frequency scattering.

Every transform works in the Fourier domain. Band-limited intermediate
signals are decimated by folding their spectrum, which equals sampling the
full-rate result. Decimation factors are chosen so that no spectral support
overlaps after folding.

Axis conventions: log-frequency index 0 is the *highest* first-order band,
so an upward chirp drifts towards lower indices and lands in theta=+1 paths.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .errors import AlignmentError, EmptyBandError, ParameterError, TooShortError
from .filterbank import (
    Filterbank,
    Lowpass2D,
    LowpassSpec,
    build_lowpass_2d,
    build_spectral_filterbank,
    build_temporal_filterbank,
    gaussian,
)
from .signal_io import AudioClip

# support of a Gaussian response kept when folding spectra, in std units
_SUPPORT = 8.0
# attenuation of the scalogram anti-alias smoother at the frame-rate Nyquist
_ANTIALIAS = 1e-3


def _pow2_floor(x: float) -> int:
    return 1 << max(0, int(math.floor(math.log2(x)))) if x >= 1 else 1


@dataclass
class Scalogram:
    """``|x * psi_lambda|`` sampled every ``hop`` samples.

    ``values`` covers the reflect-padded signal: ``pad`` frames on each
    side, ``n_valid`` frames for the original clip in between.
    """
    values: np.ndarray
    lambdas: np.ndarray       # centre frequencies, Hz
    bandwidths: np.ndarray    # -3 dB widths, Hz
    hop: int
    sample_rate: int
    pad: int = 0
    n_valid: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.n_valid is None:
            self.n_valid = self.values.shape[1] - 2 * self.pad

    @property
    def n_lambda(self):
        return self.values.shape[0]

    @property
    def frame_hop(self) -> float:
        return self.hop / self.sample_rate


@dataclass
class S1Matrix:
    values: np.ndarray        # [n_lambda, n_frames]
    frame_hop: float          # seconds
    T: int                    # samples
    hop: int = 0              # samples

    @property
    def n_frames(self):
        return self.values.shape[1]


@dataclass(frozen=True, order=True)
class JtfsPath:
    """Second-order path. ``theta`` is +1/-1 for oriented spectral wavelets
    and 0 for the path that uses the spectral lowpass (``v_f = -1``)."""
    v_t: int
    v_f: int
    theta: int
    mod_rate: float           # Hz


@dataclass
class JtfsTensor:
    values: np.ndarray        # [n_paths, n_lambda_avg, n_frames]
    paths: list[JtfsPath]
    frame_hop: float          # seconds
    hop: int = 0              # samples
    lambda_stride: int = 1
    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_frames(self):
        return self.values.shape[2]

    def oriented_energy(self) -> dict[int, float]:
        """Sum of squared coefficients per orientation (+1, -1, 0)."""
        out = {1: 0.0, -1: 0.0, 0: 0.0}
        for p, v in zip(self.paths, self.values):
            out[p.theta] += float(np.sum(v * v))
        return out


# ------------------------------------------------------------------ scalogram

def scalogram(x: AudioClip, fb: Filterbank, T: int = 2 ** 14, hop: int = 64) -> Scalogram:
    """First-order wavelet modulus of ``x`` on a common ``hop``.

    The clip is reflect-padded by ``T`` samples at both ends. Each band is
    computed at its own alias-free rate, its modulus lightly smoothed and
    resampled to ``hop``.
    """
    if fb.kind != "temporal":
        raise ParameterError("scalogram needs a temporal filterbank")
    T, hop = int(T), int(hop)
    if hop < 1 or hop & (hop - 1) or T % hop:
        raise ParameterError(f"hop must be a power of two dividing T (T={T}, hop={hop})")
    n = len(x)
    if n < 2 * T:
        raise TooShortError(f"clip of {n} samples is shorter than 2T={2 * T}")

    xp = np.pad(x.samples, T, mode="reflect")
    n_full = -(-xp.size // hop)
    m = sfft.next_fast_len(n_full)
    N = hop * m
    X = sfft.fft(xp, N)
    freqs = np.fft.fftfreq(N)

    sigma_g = (0.5 / hop) / math.sqrt(-2.0 * math.log(_ANTIALIAS))
    out = np.empty((len(fb), m))
    for row, flt in enumerate(fb.filters):
        xi, sig = flt.center_frequency, flt.sigma
        # the modulus roughly doubles the bandwidth of the complex band
        D = min(hop, _pow2_floor(1.0 / (4 * _SUPPORT * sig + _SUPPORT * sigma_g)))
        lo = max(1, int(math.floor((xi - _SUPPORT * sig) * N)))
        hi = min(N // 2, int(math.ceil((xi + _SUPPORT * sig) * N)))
        k = np.arange(lo, hi + 1)
        band = np.zeros(N // D, dtype=complex)
        band[k % (N // D)] = X[k] * flt.response_at(freqs[k])
        y = sfft.ifft(band) / D
        u = np.abs(y)
        # smooth and fold down to the common hop
        r = hop // D
        U = sfft.fft(u) * np.exp(-(np.fft.fftfreq(u.size) / D) ** 2 / (2 * sigma_g ** 2))
        v = sfft.ifft(U.reshape(r, m).sum(axis=0)).real / r
        out[row] = v
    np.maximum(out, 0.0, out=out)

    sr = x.sample_rate
    return Scalogram(
        values=out[:, :n_full],
        lambdas=fb.centers * sr,
        bandwidths=np.array([f.bandwidth for f in fb.filters]) * sr,
        hop=hop,
        sample_rate=sr,
        pad=T // hop,
        n_valid=-(-n // hop),
    )


def _time_grid(scal: Scalogram, out_hop: int) -> tuple[int, int, int]:
    """(stride in scalogram frames, first output index, n_out)."""
    if out_hop % scal.hop:
        raise ParameterError(f"output hop {out_hop} is not a multiple of the scalogram hop {scal.hop}")
    s = out_hop // scal.hop
    if scal.pad % s:
        raise ParameterError("scalogram padding must be a multiple of the output stride")
    n_out = 1 + (scal.n_valid - 1) // s
    return s, scal.pad // s, n_out


def _check_T(scal: Scalogram, lowpass: Lowpass2D):
    if scal.n_valid * scal.hop < lowpass.T:
        raise TooShortError("scalogram shorter than the averaging scale T")


def _lowpass_time(rows: np.ndarray, sigma: float, stride: int, first: int, n_out: int) -> np.ndarray:
    """Gaussian average along the last axis, then sample every ``stride``."""
    n = rows.shape[-1]
    phi = gaussian(np.fft.rfftfreq(n), sigma)
    y = sfft.irfft(sfft.rfft(rows, axis=-1) * phi, n, axis=-1)[..., ::stride]
    y = y[..., first:first + n_out]
    return np.maximum(y, 0.0)


def s1(scal: Scalogram, lowpass: Lowpass2D, alpha: int = 2) -> S1Matrix:
    """Average every band by ``phi_T`` and sample every ``T / 2**alpha`` samples."""
    _check_T(scal, lowpass)
    out_hop = lowpass.T >> int(alpha)
    s, first, n_out = _time_grid(scal, out_hop)
    n_t = s * sfft.next_fast_len(-(-scal.values.shape[1] // s))
    X = np.zeros((scal.n_lambda, n_t))
    X[:, :scal.values.shape[1]] = scal.values
    vals = _lowpass_time(X, lowpass.sigma_t(scal.hop), s, first, n_out)
    return S1Matrix(vals, out_hop / scal.sample_rate, lowpass.T, out_hop)


# ----------------------------------------------------------------------- JTFS

@dataclass
class _JointPlan:
    """Precomputed pieces shared by all paths of one scalogram."""
    n_t: int
    n_lam: int
    stride: int
    first: int
    n_out: int
    lam_stride: int
    n_avg: int
    lam_avg: np.ndarray       # [n_avg, n_lam] circulant rows of phi_F


def _joint_plan(scal: Scalogram, lowpass: Lowpass2D, alpha: int, f_fb: Filterbank) -> _JointPlan:
    out_hop = lowpass.T >> int(alpha)
    s, first, n_out = _time_grid(scal, out_hop)
    n_t = s * sfft.next_fast_len(-(-scal.values.shape[1] // s))
    # zero-pad log-frequency so no spectral wavelet wraps onto the data
    sig = min(f.sigma for f in f_fb.filters)
    reach = int(math.ceil(6.0 / (2 * math.pi * sig)))
    n_lam = 1 << int(math.ceil(math.log2(scal.n_lambda + 2 * reach)))
    lam_stride = max(1, lowpass.F // 2)
    n_avg = -(-scal.n_lambda // lam_stride)
    # phi_F as a linear (non-circular) kernel; rows past the midpoint of the
    # padding hold negative log-frequency positions
    r = np.arange(n_lam)
    r = np.where(r < scal.n_lambda + (n_lam - scal.n_lambda) // 2, r, r - n_lam)
    pos = np.arange(n_avg)[:, None] * lam_stride
    lam_avg = lambda_lowpass_kernel(pos - r[None, :], lowpass.sigma_f())
    return _JointPlan(n_t, n_lam, s, first, n_out, lam_stride, n_avg, lam_avg)


def lambda_lowpass_kernel(d, sigma_f: float) -> np.ndarray:
    """Impulse response of the Gaussian with frequency std ``sigma_f`` at integer lags ``d``."""
    d = np.asarray(d, dtype=np.float64)
    return math.sqrt(2 * math.pi) * sigma_f * np.exp(-2 * (math.pi * sigma_f * d) ** 2)


def _decimation(flt, lowpass: Lowpass2D, step: float, stride: int) -> int:
    # the complex response occupies a band of width 2*_SUPPORT*sigma; after
    # the modulus its envelope must not alias into the support of phi_T
    width = 2 * _SUPPORT * flt.sigma
    f_phi = _SUPPORT * lowpass.sigma_t(step)
    return min(stride, _pow2_floor(1.0 / (width + f_phi)))


def temporal_wavelet_response(Xf: np.ndarray, flt, D: int) -> np.ndarray:
    """``X * psi_vt`` along the last axis, sampled every ``D`` frames.

    ``Xf`` is the FFT of the (padded) scalogram along time.
    """
    n = Xf.shape[-1]
    P = Xf * flt.response(n)
    P = P.reshape(*P.shape[:-1], D, n // D).sum(axis=-2)
    return sfft.ifft(P, axis=-1) / D


def jtfs(scal: Scalogram, t_fb: Filterbank, f_fb: Filterbank, lowpass2d: Lowpass2D,
         alpha: int = 2, mod_band: tuple[float, float] | None = None,
         lowpass_paths: bool = True, admissible: bool = True,
         decimate: bool = True) -> JtfsTensor:
    """Joint time-frequency scattering of a scalogram.

    For each temporal wavelet ``psi_vt`` (applied along time) and each
    oriented spectral wavelet ``psi_vf,theta`` (applied along log-frequency)
    the modulus of the separable 2-D convolution is averaged by
    ``Phi_T,F`` and sampled every ``T / 2**alpha`` samples and ``F / 2``
    bins. ``mod_band`` skips temporal wavelets outside the band (Hz) up
    front; :func:`select_modulation_band` does the same on a finished tensor.
    With ``admissible``, bands narrower than a path's modulation rate are
    left out of that path.
    """
    if f_fb.kind != "spectral":
        raise ParameterError("jtfs needs a spectral filterbank for f_fb")
    _check_T(scal, lowpass2d)
    plan = _joint_plan(scal, lowpass2d, alpha, f_fb)
    frame_rate = scal.sample_rate / scal.hop

    X = np.zeros((scal.n_lambda, plan.n_t))
    X[:, :scal.values.shape[1]] = scal.values
    Xf = sfft.fft(X, axis=-1)

    psi_f, phi_f = f_fb.responses(plan.n_lam)
    spectral = [(f.log_freq_index, f.theta, psi_f[i]) for i, f in enumerate(f_fb.filters)]
    if lowpass_paths:
        spectral.append((-1, 0, lowpass2d.phi_f(plan.n_lam)))

    paths, blocks = [], []
    for v_t, flt in enumerate(t_fb.filters):
        rate = flt.center_frequency * frame_rate
        if mod_band is not None and not (mod_band[0] <= rate <= mod_band[1]):
            continue
        rows = np.ones(scal.n_lambda, dtype=bool)
        if admissible:
            rows = scal.bandwidths >= rate
            if not rows.any():
                continue
        D = _decimation(flt, lowpass2d, scal.hop, plan.stride) if decimate else 1
        Y = temporal_wavelet_response(Xf[rows] if not rows.all() else Xf, flt, D)
        # log-frequency on the last (contiguous) axis for the spectral stage
        Yp = np.zeros((Y.shape[1], plan.n_lam), dtype=complex)
        Yp[:, np.flatnonzero(rows)] = Y.T
        Yf = sfft.fft(Yp, axis=-1)
        for v_f, theta, resp in spectral:
            Z = np.abs(sfft.ifft(Yf * resp, axis=-1))
            W = (Z @ plan.lam_avg.T).T
            blocks.append(_lowpass_time(W, lowpass2d.sigma_t(scal.hop * D), plan.stride // D,
                                        plan.first, plan.n_out))
            paths.append(JtfsPath(v_t, v_f, theta, float(rate)))

    order = sorted(range(len(paths)), key=lambda i: paths[i])
    values = (np.stack([blocks[i] for i in order]) if order
              else np.zeros((0, plan.n_avg, plan.n_out)))
    out_hop = lowpass2d.T >> int(alpha)
    lam_idx = np.arange(plan.n_avg) * plan.lam_stride
    return JtfsTensor(
        values=values,
        paths=[paths[i] for i in order],
        frame_hop=out_hop / scal.sample_rate,
        hop=out_hop,
        lambda_stride=plan.lam_stride,
        lambdas=scal.lambdas[lam_idx],
    )


def select_modulation_band(tensor: JtfsTensor, band: tuple[float, float]) -> JtfsTensor:
    lo, hi = band
    if not lo < hi:
        raise ParameterError(f"modulation band needs lo < hi, got {band}")
    keep = [i for i, p in enumerate(tensor.paths) if lo <= p.mod_rate <= hi]
    if not keep:
        raise EmptyBandError(f"no path has a modulation rate in [{lo}, {hi}] Hz")
    return JtfsTensor(tensor.values[keep], [tensor.paths[i] for i in keep],
                      tensor.frame_hop, tensor.hop, tensor.lambda_stride, tensor.lambdas)


def scattering_vector(s1m: S1Matrix, tensor: JtfsTensor) -> np.ndarray:
    """All coefficients flattened with sampling weights, so that the
    Euclidean norm approximates the continuous L2 norm (signal units)."""
    w1 = math.sqrt(s1m.hop)
    w2 = math.sqrt(tensor.hop * tensor.lambda_stride)
    return np.concatenate([w1 * s1m.values.ravel(), w2 * tensor.values.ravel()])


# ------------------------------------------------------------- configured use

@dataclass(frozen=True)
class ScatteringParams:
    """Hyperparameters. ``J2`` defaults to ``log2(T/scal_hop) - 1`` and ``F``
    to two octaves of the first-order axis (``2*Q1`` bins)."""
    sample_rate: int = 44100
    T: int = 2 ** 14
    Q1: int = 16
    J1: int = 8
    Q2: int = 2
    J2: int | None = None
    Q_fr: int = 2
    J_fr: int = 4
    F: int | None = None
    alpha: int = 2
    mod_band: tuple[float, float] = (0.0, 50.0)
    scal_hop: int = 64
    lowpass_paths: bool = True
    admissible: bool = True

    def resolved_F(self) -> int:
        return self.F or 2 * self.Q1

    def resolved_J2(self) -> int:
        return self.J2 or max(1, int(math.log2(self.T // self.scal_hop)) - 1)


def _fitted_bank(builder, Q, J, n_min):
    n = 1 << int(math.ceil(math.log2(max(2, n_min))))
    while True:
        try:
            return builder(Q, J, n)
        except ParameterError as exc:
            if "too large" not in str(exc) or n > 2 ** 24:
                raise
            n *= 2


class Scattering:
    """Filterbanks and lowpass built once for a parameter set."""

    def __init__(self, params: ScatteringParams = ScatteringParams()):
        p = params
        if p.T % p.scal_hop or (p.T >> p.alpha) % p.scal_hop:
            raise ParameterError("scal_hop must divide T / 2**alpha")
        self.params = p
        self.fb1 = _fitted_bank(build_temporal_filterbank, p.Q1, p.J1, 2 * p.T)
        t_frames = p.T // p.scal_hop
        self.fb2 = _fitted_bank(build_temporal_filterbank, p.Q2, p.resolved_J2(), 2 * t_frames)
        self.fb_fr = _fitted_bank(build_spectral_filterbank, p.Q_fr, p.J_fr, 2 * p.Q1 * p.J1)
        self.lowpass = build_lowpass_2d(LowpassSpec(p.T, p.resolved_F()))

    @property
    def frame_hop(self) -> float:
        return (self.params.T >> self.params.alpha) / self.params.sample_rate

    def scalogram(self, x: AudioClip) -> Scalogram:
        if x.sample_rate != self.params.sample_rate:
            raise ParameterError(
                f"clip sample rate {x.sample_rate} != configured {self.params.sample_rate}"
            )
        return scalogram(x, self.fb1, self.params.T, self.params.scal_hop)

    def s1(self, scal: Scalogram) -> S1Matrix:
        return s1(scal, self.lowpass, self.params.alpha)

    def jtfs(self, scal: Scalogram, select: bool = True, **kw) -> JtfsTensor:
        p = self.params
        kw.setdefault("lowpass_paths", p.lowpass_paths)
        kw.setdefault("admissible", p.admissible)
        band = p.mod_band if select else None
        tensor = jtfs(scal, self.fb2, self.fb_fr, self.lowpass, p.alpha, mod_band=band, **kw)
        return select_modulation_band(tensor, band) if band is not None else tensor

    def __call__(self, x: AudioClip) -> tuple[S1Matrix, JtfsTensor]:
        scal = self.scalogram(x)
        return self.s1(scal), self.jtfs(scal)


# ----------------------------------------------------------------- export

def dump_tensor(path, tensor: JtfsTensor) -> None:
    """Write ``<path>.bin`` (float64, C order) and ``<path>.json`` header."""
    path = Path(path)
    header = {
        "format": "callscat-jtfs",
        "version": 1,
        "dtype": "<f8",
        "shape": list(tensor.values.shape),
        "frame_hop": tensor.frame_hop,
        "hop": tensor.hop,
        "lambda_stride": tensor.lambda_stride,
        "lambdas_hz": [float(v) for v in tensor.lambdas],
        "paths": [{"v_t": p.v_t, "v_f": p.v_f, "theta": p.theta, "mod_rate": p.mod_rate}
                  for p in tensor.paths],
    }
    path.with_suffix(".bin").write_bytes(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())
    path.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))


def load_tensor(path) -> JtfsTensor:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    values = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=header["dtype"])
    values = values.reshape(header["shape"]).copy()
    paths = [JtfsPath(d["v_t"], d["v_f"], d["theta"], d["mod_rate"]) for d in header["paths"]]
    return JtfsTensor(values, paths, header["frame_hop"], header["hop"],
                      header["lambda_stride"], np.array(header["lambdas_hz"]))


def path_energy_csv(path, tensor: JtfsTensor) -> None:
    """Per-path energy table (``v_t,v_f,theta,mod_rate,energy``) for plotting."""
    lines = ["v_t,v_f,theta,mod_rate,energy"]
    for p, v in zip(tensor.paths, tensor.values):
        lines.append(f"{p.v_t},{p.v_f},{p.theta},{p.mod_rate:.6g},{float(np.sum(v * v)):.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def check_aligned(a_frames: int, b_frames: int) -> None:
    if a_frames != b_frames:
        raise AlignmentError(f"frame counts differ: {a_frames} vs {b_frames}")
