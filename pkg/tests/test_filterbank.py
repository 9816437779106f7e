import math

import numpy as np
import pytest

from callscat.errors import ParameterError
from callscat.filterbank import (XI_MAX, LowpassSpec, build_lowpass_2d, build_spectral_filterbank,
                                 build_temporal_filterbank)


@pytest.mark.parametrize("Q,J,n", [(1, 3, 256), (16, 8, 2 ** 15), (2, 7, 2048), (8, 6, 8192)])
def test_temporal_bank_geometry(Q, J, n):
    fb = build_temporal_filterbank(Q, J, n)
    c = fb.centers
    assert len(fb) == Q * J
    assert c[0] == pytest.approx(XI_MAX)
    np.testing.assert_allclose(c[:-1] / c[1:], 2 ** (1 / Q), rtol=1e-9)


def test_octave_bank_ratio_is_two():
    c = build_temporal_filterbank(1, 3, 256).centers
    assert np.all(c[:-1] / c[1:] == 2.0)


@pytest.mark.parametrize("Q,J,n", [(1, 3, 256), (16, 8, 2 ** 15), (2, 7, 2048)])
def test_temporal_bank_littlewood_paley_and_analyticity(Q, J, n):
    fb = build_temporal_filterbank(Q, J, n)
    lp = fb.littlewood_paley()
    f = np.fft.fftfreq(n)
    pos = (f > 0) & (f <= XI_MAX)
    assert 0.5 <= lp[pos].max() <= 1.05
    # covered band: the span of the wavelet centres
    assert lp[(f >= fb.centers[-1]) & (f <= XI_MAX)].min() >= 0.5
    psi, phi = fb.responses(n)
    neg = np.sum(np.abs(psi[:, f < 0]) ** 2)
    assert neg <= 1e-12 * np.sum(np.abs(psi) ** 2)
    assert np.abs(psi).max() <= 1.0 + 1e-12
    assert phi[0] == pytest.approx(phi.max()) and np.all(phi >= 0)


def test_spectral_bank_orientations():
    fb = build_spectral_filterbank(2, 4, 256)
    assert len(fb) == 16
    mags = sorted({abs(c) for c in fb.centers})
    assert len(mags) == 8
    n = 256
    idx = (-np.arange(n)) % n
    for plus, minus in zip(fb.filters[0::2], fb.filters[1::2]):
        assert plus.theta == 1 and minus.theta == -1
        assert minus.center_frequency == -plus.center_frequency
        # exact frequency reversal
        assert np.array_equal(minus.response(n), plus.response(n)[idx])
    lp = fb.littlewood_paley()
    assert 0.5 <= lp.max() <= 1.05


def test_bank_too_wide_for_window():
    with pytest.raises(ParameterError, match="too large"):
        build_temporal_filterbank(16, 12, 1024)
    with pytest.raises(ParameterError):
        build_temporal_filterbank(0, 3, 256)
    with pytest.raises(ParameterError):
        build_temporal_filterbank(1, 3, 300)


def test_lowpass_dc_gain_and_constant_signal():
    lp = build_lowpass_2d(LowpassSpec(2 ** 10, 4))
    n = 4096
    assert lp.phi_t(n)[0] == 1.0 and lp.phi_f(64)[0] == 1.0
    y = np.fft.ifft(np.fft.fft(np.full(n, 3.0)) * lp.phi_t(n)).real
    np.testing.assert_allclose(y, 3.0, rtol=1e-12)


def test_lowpass_half_power_point():
    # Gaussian with frequency std 0.1/T: -3 dB at sqrt(ln 2) * 0.1 / T cycles/sample
    T = 2 ** 14
    lp = build_lowpass_2d(LowpassSpec(T, 32))
    n = 2 ** 22
    f = np.fft.rfftfreq(n)
    power = lp.phi_t(n)[: f.size] ** 2
    # power falls monotonically; interpolate the 0.5 crossing
    k = int(np.argmax(power < 0.5))
    f3 = np.interp(0.5, power[[k, k - 1]], f[[k, k - 1]])
    expected = math.sqrt(math.log(2)) * 0.1 / T
    assert f3 == pytest.approx(expected, rel=1e-3)
    assert f3 * 44100 == pytest.approx(0.224, rel=0.01)
    assert lp.cutoff_t == pytest.approx(expected)


def test_lowpass_separable():
    lp = build_lowpass_2d(LowpassSpec(16, 4))
    rng = np.random.default_rng(0)
    X = rng.random((32, 64))
    R = lp.response(64, 32)
    joint = np.fft.ifft2(np.fft.fft2(X) * R).real
    along_t = np.fft.ifft(np.fft.fft(X, axis=1) * lp.phi_t(64), axis=1).real
    both = np.fft.ifft(np.fft.fft(along_t, axis=0) * lp.phi_f(32)[:, None], axis=0).real
    np.testing.assert_allclose(joint, both, atol=1e-12)


def test_lowpass_spec_requires_powers_of_two():
    with pytest.raises(ParameterError):
        LowpassSpec(1000, 4)


def test_filterbank_csv(tmp_path):
    fb = build_temporal_filterbank(1, 3, 64)
    fb.to_csv(tmp_path / "fb.csv")
    lines = (tmp_path / "fb.csv").read_text().splitlines()
    assert lines[0] == "bin,lowpass,psi0,psi1,psi2" and len(lines) == 65
