import numpy as np
import pytest

from downbeat.audio import AudioClip


def tone(freqs, duration=3.0, sr=44100.0, amp=0.3):
    t = np.arange(int(duration * sr)) / sr
    x = sum(np.sin(2 * np.pi * f * t) for f in np.atleast_1d(freqs))
    return AudioClip(amp * x / len(np.atleast_1d(freqs)), sr)


def clicks(times, duration, sr=44100.0, width=0.002):
    x = np.zeros(int(duration * sr))
    n = int(width * sr)
    burst = np.hanning(n) * np.sin(2 * np.pi * 3000 * np.arange(n) / sr)
    for t in times:
        i = int(round(t * sr))
        x[i:i + n] += burst[:len(x) - i]
    return AudioClip(0.8 * x, sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
