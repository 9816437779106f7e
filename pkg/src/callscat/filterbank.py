"""Constant-Q Morlet filterbanks materialised in the frequency domain.

All frequencies are in cycles per sample of whatever axis the bank is
applied to (audio samples, scalogram frames or log-frequency bins).
Wavelets are one-sided Gaussians with a Morlet zero-mean correction, so
temporal wavelets are analytic by construction. Adjacent centres are spaced
by ``2**(1/Q)`` and neighbouring responses cross at -3 dB. Each bank is
scaled so that its Littlewood-Paley sum never exceeds one.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

XI_MAX = 0.35
# frequency std of the averaging Gaussians in units of 1/scale; the time
# std is then scale / (2 pi 0.1) ~ 1.6 scale
SIGMA_PHI = 0.1
# distance from a Gaussian's centre to its -3 dB point, in units of sigma
_HALF_POWER = math.sqrt(math.log(2.0))


def _is_pow2(n) -> bool:
    n = int(n)
    return n > 0 and n & (n - 1) == 0


def morlet_response(freqs: np.ndarray, xi: float, sigma: float) -> np.ndarray:
    """One-sided Morlet response centred at ``xi > 0`` (zero for freqs <= 0)."""
    f = np.asarray(freqs, dtype=np.float64)
    pos = f > 0
    out = np.zeros_like(f)
    fp = f[pos]
    kappa = math.exp(-xi * xi / (2 * sigma * sigma))
    out[pos] = np.exp(-(fp - xi) ** 2 / (2 * sigma * sigma)) - kappa * np.exp(-fp * fp / (2 * sigma * sigma))
    return out


def gaussian_lowpass(freqs: np.ndarray, cutoff: float) -> np.ndarray:
    """Real Gaussian lowpass with unit DC gain and its -3 dB point at ``cutoff``."""
    return gaussian(freqs, cutoff / _HALF_POWER)


def gaussian(freqs: np.ndarray, sigma: float) -> np.ndarray:
    f = np.asarray(freqs, dtype=np.float64)
    return np.exp(-f * f / (2 * sigma * sigma))


@dataclass(frozen=True)
class WaveletFilter:
    center_frequency: float   # signed, cycles/sample
    bandwidth: float          # -3 dB full width, cycles/sample
    log_freq_index: int
    sigma: float
    scale: float              # amplitude normalisation shared by the bank
    theta: int = 1            # +1 / -1 orientation; temporal wavelets are +1
    n_fft: int = 0

    def response(self, n: int) -> np.ndarray:
        f = np.fft.fftfreq(n)
        psi = self.scale * morlet_response(f, abs(self.center_frequency), self.sigma)
        if self.theta < 0:
            psi = psi[(-np.arange(n)) % n]
        return psi

    def response_at(self, freqs) -> np.ndarray:
        """Response at arbitrary frequencies (cycles/sample)."""
        f = np.asarray(freqs, dtype=np.float64)
        if self.theta < 0:
            f = -f
        return self.scale * morlet_response(f, abs(self.center_frequency), self.sigma)

    @property
    def frequency_response(self) -> np.ndarray:
        return self.response(self.n_fft)


@dataclass(frozen=True)
class Lowpass:
    cutoff: float   # -3 dB point, cycles/sample
    scale: float = 1.0

    def response(self, n: int) -> np.ndarray:
        return self.scale * gaussian_lowpass(np.fft.fftfreq(n), self.cutoff)


@dataclass(frozen=True)
class Filterbank:
    """Wavelets plus a matched lowpass completing the frequency tiling.

    ``kind`` is ``'temporal'`` (analytic wavelets, theta=+1 only) or
    ``'spectral'`` (each centre at both orientations, ordered +1 then -1).
    ``frequency_response`` holds the bank at ``n_fft`` bins; other sizes are
    available through :meth:`responses`.
    """
    filters: tuple[WaveletFilter, ...]
    Q: int
    J: int
    lowpass: Lowpass
    n_fft: int
    kind: str
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.filters)

    @property
    def centers(self) -> np.ndarray:
        return np.array([f.center_frequency for f in self.filters])

    def responses(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``(psi, phi)``: wavelet responses ``[n_filters, n]`` and lowpass ``[n]``."""
        n = int(n)
        if n not in self._cache:
            psi = np.stack([f.response(n) for f in self.filters]) if self.filters else np.zeros((0, n))
            self._cache[n] = (psi, self.lowpass.response(n))
        return self._cache[n]

    @property
    def frequency_response(self) -> np.ndarray:
        return self.responses(self.n_fft)[0]

    def littlewood_paley(self, n: int | None = None) -> np.ndarray:
        psi, phi = self.responses(n or self.n_fft)
        return np.sum(np.abs(psi) ** 2, axis=0) + np.abs(phi) ** 2

    def to_csv(self, path) -> None:
        """Dump ``bin, |response|`` columns for every filter (plotting aid)."""
        psi, phi = self.responses(self.n_fft)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin", "lowpass"] + [f"psi{i}" for i in range(len(psi))])
            for k in range(self.n_fft):
                w.writerow([k, f"{abs(phi[k]):.9g}"] + [f"{abs(p[k]):.9g}" for p in psi])


def _centers(Q: int, J: int, xi_max: float) -> np.ndarray:
    return xi_max * 2.0 ** (-np.arange(Q * J) / Q)


def _sigma(xi, Q):
    # lower -3 dB point at the geometric midpoint xi * 2**(-1/(2Q))
    return xi * (1.0 - 2.0 ** (-0.5 / Q)) / _HALF_POWER


def _lp_scale(filters_unit, lowpass: Lowpass, n: int) -> float:
    lp = np.abs(lowpass.response(n)) ** 2
    for flt in filters_unit:
        lp = lp + np.abs(flt.response(n)) ** 2
    peak = lp.max()
    return 1.0 / math.sqrt(peak) if peak > 1.0 else 1.0


def build_temporal_filterbank(Q: int, J: int, n_fft: int, xi_max: float = XI_MAX) -> Filterbank:
    """``Q*J`` analytic Morlet wavelets from ``xi_max`` down ``J`` octaves.

    The lowpass is a Gaussian whose -3 dB point coincides with the lower
    -3 dB point of the lowest wavelet.
    """
    Q, J, n_fft = int(Q), int(J), int(n_fft)
    if Q < 1 or J < 1:
        raise ParameterError(f"need Q >= 1 and J >= 1, got Q={Q}, J={J}")
    if not _is_pow2(n_fft):
        raise ParameterError(f"n_fft must be a power of two, got {n_fft}")
    xis = _centers(Q, J, xi_max)
    sigmas = _sigma(xis, Q)
    # time-domain width (+-3 std) of the lowest wavelet must fit the window
    support = 6.0 / (2 * np.pi * sigmas[-1])
    if support > n_fft:
        raise ParameterError(
            f"J={J} too large for n_fft={n_fft}: lowest wavelet spans {support:.0f} samples"
        )
    unit = [WaveletFilter(xi, 2 * _HALF_POWER * s, i, s, 1.0) for i, (xi, s) in enumerate(zip(xis, sigmas))]
    lowpass = Lowpass(max(xis[-1] - _HALF_POWER * sigmas[-1], 1e-12))
    scale = _lp_scale(unit, lowpass, n_fft)
    filters = tuple(
        WaveletFilter(f.center_frequency, f.bandwidth, f.log_freq_index, f.sigma, scale, 1, n_fft)
        for f in unit
    )
    lowpass = Lowpass(lowpass.cutoff, scale)
    return Filterbank(filters, Q, J, lowpass, n_fft, "temporal")


def build_spectral_filterbank(Q: int, J_fr: int, n_fft: int = 256, xi_max: float = XI_MAX) -> Filterbank:
    """Oriented wavelets along the log-frequency axis.

    For every centre magnitude there is a theta=+1 filter at ``+xi`` and a
    theta=-1 filter at ``-xi`` whose response is the frequency-reversed copy.
    """
    Q, J_fr, n_fft = int(Q), int(J_fr), int(n_fft)
    if Q < 1 or J_fr < 1:
        raise ParameterError(f"need Q >= 1 and J_fr >= 1, got Q={Q}, J_fr={J_fr}")
    if not _is_pow2(n_fft):
        raise ParameterError(f"n_fft must be a power of two, got {n_fft}")
    xis = _centers(Q, J_fr, xi_max)
    sigmas = _sigma(xis, Q)
    support = 6.0 / (2 * np.pi * sigmas[-1])
    if support > n_fft:
        raise ParameterError(
            f"J_fr={J_fr} too large for n_fft={n_fft}: lowest wavelet spans {support:.0f} bins"
        )
    unit = []
    for i, (xi, s) in enumerate(zip(xis, sigmas)):
        for theta in (1, -1):
            unit.append(WaveletFilter(theta * xi, 2 * _HALF_POWER * s, i, s, 1.0, theta))
    lowpass = Lowpass(max(xis[-1] - _HALF_POWER * sigmas[-1], 1e-12))
    scale = _lp_scale(unit, lowpass, n_fft)
    filters = tuple(
        WaveletFilter(f.center_frequency, f.bandwidth, f.log_freq_index, f.sigma, scale, f.theta, n_fft)
        for f in unit
    )
    lowpass = Lowpass(lowpass.cutoff, scale)
    return Filterbank(filters, Q, J_fr, lowpass, n_fft, "spectral")


@dataclass(frozen=True)
class LowpassSpec:
    T: int   # temporal averaging scale, samples
    F: int   # spectral averaging scale, log-frequency bins

    def __post_init__(self):
        for name in ("T", "F"):
            v = getattr(self, name)
            if not _is_pow2(v):
                raise ParameterError(f"{name} must be a positive power of two, got {v}")


@dataclass(frozen=True)
class Lowpass2D:
    """Separable Gaussian averaging ``phi_T(t) * phi_F(lambda)``.

    Each factor has frequency std ``SIGMA_PHI / scale``, so the time-domain
    std is about ``1.6 * scale``. ``phi_t``/``phi_f`` take the axis length
    and, for the time axis, the number of audio samples per axis step.
    """
    spec: LowpassSpec

    @property
    def T(self):
        return self.spec.T

    @property
    def F(self):
        return self.spec.F

    def sigma_t(self, step: float = 1.0) -> float:
        """Frequency std of phi_T in cycles per axis step."""
        return SIGMA_PHI * step / self.spec.T

    def sigma_f(self) -> float:
        return SIGMA_PHI / self.spec.F

    @property
    def cutoff_t(self) -> float:
        """-3 dB point of phi_T, cycles/sample."""
        return _HALF_POWER * self.sigma_t()

    def phi_t(self, n: int, step: float = 1.0) -> np.ndarray:
        return gaussian(np.fft.fftfreq(n), self.sigma_t(step))

    def phi_f(self, n: int) -> np.ndarray:
        return gaussian(np.fft.fftfreq(n), self.sigma_f())

    def response(self, n_t: int, n_f: int, step: float = 1.0) -> np.ndarray:
        """2-D response ``[n_f, n_t]`` (log-frequency rows, time columns)."""
        return np.outer(self.phi_f(n_f), self.phi_t(n_t, step))


def build_lowpass_2d(spec: LowpassSpec) -> Lowpass2D:
    return Lowpass2D(spec)
