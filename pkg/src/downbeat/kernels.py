"""Backend selection for the sequential inner loops.

The compiled ``_core`` extension is used when it imports; otherwise, or when
the environment variable ``DOWNBEAT_PURE_PYTHON`` is set to ``1``, the numpy
versions from ``_pykernels`` are used. ``BACKEND`` names the active one.
"""

import os

import numpy as np

from . import _pykernels

_compiled = None
if os.environ.get("DOWNBEAT_PURE_PYTHON") != "1":
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels


def _f64(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def viterbi_decode(log_pi, log_a, log_e):
    """Max-product decoding in the log domain.

    Returns ``(path, log_prob)``; ties go to the lowest state index.
    """
    return _impl.viterbi_decode(_f64(log_pi, 1), _f64(log_a, 2), _f64(log_e, 2))


def periodicity_dp(mag, weights):
    """Best weighted path through a (frames x bins) magnitude matrix."""
    return _impl.periodicity_dp(_f64(mag, 2), _f64(weights, 1))


def overlap_add_cosines(n_out, omega, offset, window):
    return _impl.overlap_add_cosines(int(n_out), _f64(omega, 1), _f64(offset, 1),
                                     _f64(window, 1))


def python_backend():
    """The pure numpy module, for benchmarks and cross-checks."""
    return _pykernels


def compiled_backend():
    """The compiled module, or ``None`` when it is not available."""
    return _compiled
