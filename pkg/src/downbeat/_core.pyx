# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential kernels.

Each function mirrors one in :mod:`downbeat._pykernels` operation for
operation. The two decoders return bit-identical results across backends;
``overlap_add_cosines`` may differ in the last ulp because libm and numpy
evaluate ``cos`` differently.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, INFINITY

cnp.import_array()


def viterbi_decode(const double[::1] log_pi, const double[:, ::1] log_a,
                   const double[:, ::1] log_e):
    cdef Py_ssize_t T = log_e.shape[0]
    cdef Py_ssize_t S = log_e.shape[1]
    cdef Py_ssize_t t, i, j, arg
    cdef double best, cand
    delta_arr = np.empty(S, dtype=np.float64)
    nxt_arr = np.empty(S, dtype=np.float64)
    back_arr = np.zeros((T, S), dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef double[::1] delta = delta_arr
    cdef double[::1] nxt = nxt_arr
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef cnp.int64_t[::1] path = path_arr

    for j in range(S):
        delta[j] = log_pi[j] + log_e[0, j]
    for t in range(1, T):
        for j in range(S):
            best = -INFINITY
            arg = 0
            for i in range(S):
                cand = delta[i] + log_a[i, j]
                if cand > best:
                    best = cand
                    arg = i
            nxt[j] = best + log_e[t, j]
            back[t, j] = arg
        for j in range(S):
            delta[j] = nxt[j]

    best = -INFINITY
    arg = 0
    for j in range(S):
        if delta[j] > best:
            best = delta[j]
            arg = j
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr, best


def periodicity_dp(const double[:, ::1] mag, const double[::1] weights):
    """``weights`` has 2*r+1 entries for bin offsets -r..r."""
    cdef Py_ssize_t T = mag.shape[0]
    cdef Py_ssize_t B = mag.shape[1]
    cdef Py_ssize_t r = (weights.shape[0] - 1) // 2
    cdef Py_ssize_t t, b, bp, k, arg
    cdef double best, cand
    prev_arr = np.empty(B, dtype=np.float64)
    cur_arr = np.empty(B, dtype=np.float64)
    back_arr = np.zeros((T, B), dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef double[::1] prev = prev_arr
    cdef double[::1] cur = cur_arr
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef cnp.int64_t[::1] path = path_arr

    for b in range(B):
        prev[b] = mag[0, b]
    for t in range(1, T):
        for b in range(B):
            best = -INFINITY
            arg = 0
            for k in range(2 * r + 1):
                bp = b + k - r
                if bp < 0 or bp >= B:
                    continue
                cand = prev[bp] + weights[r - (k - r)] * mag[t, b]
                if cand > best:
                    best = cand
                    arg = bp
            cur[b] = best
            back[t, b] = arg
        for b in range(B):
            prev[b] = cur[b]

    best = -INFINITY
    arg = 0
    for b in range(B):
        if prev[b] > best:
            best = prev[b]
            arg = b
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr, best


def overlap_add_cosines(Py_ssize_t n_out, const double[::1] omega,
                        const double[::1] offset, const double[::1] window):
    """Sum of ``window[n - t + h] * cos(omega[t] * n + offset[t])`` over frames t."""
    cdef Py_ssize_t T = omega.shape[0]
    cdef Py_ssize_t W = window.shape[0]
    cdef Py_ssize_t h = W // 2
    cdef Py_ssize_t t, m, n
    out_arr = np.zeros(n_out, dtype=np.float64)
    cdef double[::1] out = out_arr
    for t in range(T):
        for m in range(W):
            n = t + m - h
            if n < 0 or n >= n_out:
                continue
            out[n] += window[m] * cos(omega[t] * n + offset[t])
    return out_arr
