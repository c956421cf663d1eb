import os
import subprocess
import sys

import numpy as np
import pytest

from downbeat import kernels

py = kernels.python_backend()
compiled = kernels.compiled_backend()
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled core not built")


@needs_compiled
def test_viterbi_parity(rng):
    n = 20
    log_a = np.log(rng.dirichlet(np.ones(n), size=n))
    log_e = np.log(rng.random((50, n)))
    log_pi = np.full(n, -np.log(n))
    p1, b1 = py.viterbi_decode(log_pi, log_a, log_e)
    p2, b2 = compiled.viterbi_decode(log_pi, log_a, log_e)
    np.testing.assert_array_equal(np.asarray(p1), np.asarray(p2))
    assert b1 == b2


@needs_compiled
def test_viterbi_parity_with_ties():
    log_a = np.log(np.full((4, 4), 0.25))
    log_e = np.zeros((6, 4))
    log_pi = np.full(4, -np.log(4))
    p1, _ = py.viterbi_decode(log_pi, log_a, log_e)
    p2, _ = compiled.viterbi_decode(log_pi, log_a, log_e)
    np.testing.assert_array_equal(np.asarray(p1), np.zeros(6))
    np.testing.assert_array_equal(np.asarray(p2), np.zeros(6))


@needs_compiled
def test_periodicity_dp_parity(rng):
    mag = rng.random((300, 60))
    w = np.array([0.5, 0.7, 1.0, 0.7, 0.5])
    b1, s1 = py.periodicity_dp(mag, w)
    b2, s2 = compiled.periodicity_dp(mag, w)
    np.testing.assert_array_equal(np.asarray(b1), np.asarray(b2))
    assert s1 == s2


@needs_compiled
def test_overlap_add_parity(rng):
    window = np.hanning(31)
    omega = rng.uniform(0.05, 0.5, size=200)
    offset = rng.uniform(-np.pi, np.pi, size=200)
    a = py.overlap_add_cosines(200, omega, offset, window)
    b = compiled.overlap_add_cosines(200, omega, offset, window)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_single_frame_overlap_add_is_windowed_cosine():
    window = np.hanning(11)
    out = kernels.overlap_add_cosines(11, np.array([0.3]), np.array([0.2]), window)
    n = np.arange(6)
    np.testing.assert_allclose(out[:6], window[5:] * np.cos(0.3 * n + 0.2), atol=1e-15)
    assert np.all(out[6:] == 0)


def test_pure_python_switch():
    env = dict(os.environ, DOWNBEAT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from downbeat import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_input_validation():
    with pytest.raises(ValueError):
        kernels.periodicity_dp(np.zeros(5), np.ones(5))
