import numpy as np
import pytest

from callscat.scattering import Scattering, ScatteringParams
from callscat.signal_io import AudioClip, Direction, SynthCallSpec, synth_call

SR = 44100


def chirp_clip(direction="up", f0=2000.0, f1=4000.0, dur=0.5, total=1.5, onset=0.5, amp=0.5, sr=SR):
    """A single chirp placed in an otherwise silent clip."""
    spec = SynthCallSpec(Direction(direction), f0, f1, dur, amp)
    call = synth_call(spec, sr).samples
    x = np.zeros(int(round(total * sr)))
    i0 = int(round(onset * sr))
    x[i0:i0 + call.size] = call
    return AudioClip(x, sr)


@pytest.fixture(scope="session")
def small_scattering():
    # a reduced configuration that keeps unit tests fast
    return Scattering(ScatteringParams(T=2 ** 12, Q1=8, J1=6, Q2=2, Q_fr=2, J_fr=3))


@pytest.fixture(scope="session")
def paper_scattering():
    return Scattering(ScatteringParams())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------ acceptance log

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
