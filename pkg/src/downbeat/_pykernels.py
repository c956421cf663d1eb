"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Used when the extension is not built or when ``DOWNBEAT_PURE_PYTHON=1``.
The recursions perform the same floating point operations in the same order
as the compiled code, so decoded paths and scores match bit for bit.
"""

import numpy as np


def viterbi_decode(log_pi, log_a, log_e):
    T, S = log_e.shape
    back = np.zeros((T, S), dtype=np.int64)
    delta = log_pi + log_e[0]
    for t in range(1, T):
        cand = delta[:, None] + log_a
        # argmax returns the first maximum: lowest predecessor index wins ties
        arg = np.argmax(cand, axis=0)
        back[t] = arg
        delta = cand[arg, np.arange(S)] + log_e[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    best = float(delta[path[-1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def periodicity_dp(mag, weights):
    T, B = mag.shape
    r = (len(weights) - 1) // 2
    back = np.zeros((T, B), dtype=np.int64)
    prev = mag[0].copy()
    bins = np.arange(B)
    for t in range(1, T):
        cand = np.full((B, 2 * r + 1), -np.inf)
        for k in range(2 * r + 1):
            bp = bins + k - r
            ok = (bp >= 0) & (bp < B)
            cand[ok, k] = prev[bp[ok]] + weights[2 * r - k] * mag[t, ok]
        k_best = np.argmax(cand, axis=1)
        back[t] = bins + k_best - r
        prev = cand[bins, k_best]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(prev))
    best = float(prev[path[-1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def overlap_add_cosines(n_out, omega, offset, window):
    W = len(window)
    h = W // 2
    out = np.zeros(n_out)
    m = np.arange(W)
    for t in range(len(omega)):
        n = t + m - h
        lo = max(0, h - t)
        hi = min(W, n_out - t + h)
        if hi <= lo:
            continue
        nn = n[lo:hi]
        out[nn] += window[lo:hi] * np.cos(omega[t] * nn + offset[t])
    return out
