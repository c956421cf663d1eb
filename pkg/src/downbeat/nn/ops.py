"""Forward and backward kernels on ``(batch, time, freq, maps)`` float64 arrays.

Convolution is the valid cross-correlation with one bias per output map.
Small filters run as a sum of shifted matrix products; large ones go through
the FFT, which is exact here because the transform size covers the whole
input and a valid correlation never wraps.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

# filters with more taps than this use the FFT path
FFT_MIN_TAPS = 64
LOG_EPS = 1e-12


def conv_output_shape(x_shape, w_shape) -> tuple[int, int, int, int]:
    b, n, m, l = x_shape
    t1, v1, lw, n1 = w_shape
    if lw != l:
        raise ValueError(f"filter expects {lw} input maps, got {l}")
    if n < t1 or m < v1:
        raise ValueError(f"filter {t1}x{v1} larger than input {n}x{m}")
    return b, n - t1 + 1, m - v1 + 1, n1


def _use_fft(w_shape) -> bool:
    return w_shape[0] * w_shape[1] > FFT_MIN_TAPS


def _fft_size(n, m):
    return sfft.next_fast_len(n, real=True), sfft.next_fast_len(m, real=True)


def _spectrum(a, s, axes):
    """2-D real FFT zero-padded to ``s``; the shorter, last axis goes first so
    padding rows are never transformed along it."""
    f = sfft.rfft(a, n=s[1], axis=axes[1])
    return sfft.fft(f, n=s[0], axis=axes[0], overwrite_x=True)


def _inverse(f, s, axes, rows, cols):
    """Inverse of :func:`_spectrum`, returning only ``rows`` x ``cols``."""
    g = sfft.ifft(f, axis=axes[0], overwrite_x=True)
    g = g[(slice(None),) * axes[0] + (rows,)]
    out = sfft.irfft(g, n=s[1], axis=axes[1])
    return out[(slice(None),) * axes[1] + (cols,)]


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, method: str = "auto",
                 cache: dict | None = None) -> np.ndarray:
    """``y[., t', v', k] = b[k] + sum_{t,v,l} w[t,v,l,k] x[., t'+t, v'+v, l]``.

    On the FFT path the input spectrum is stored in ``cache`` for reuse by
    :func:`conv_backward`.
    """
    _, n2, m2, _ = conv_output_shape(x.shape, w.shape)
    t1, v1 = w.shape[:2]
    if method == "fft" or (method == "auto" and _use_fft(w.shape)):
        s = _fft_size(*x.shape[1:3])
        fx = _spectrum(x, s, (1, 2))
        if cache is not None:
            cache["fx"] = fx
        fw = _spectrum(w[::-1, ::-1], s, (0, 1))
        y = _inverse(np.einsum("bnml,nmlk->bnmk", fx, fw), s, (1, 2),
                     slice(t1 - 1, t1 - 1 + n2), slice(v1 - 1, v1 - 1 + m2))
    else:
        y = np.zeros((x.shape[0], n2, m2, w.shape[3]))
        for t in range(t1):
            for v in range(v1):
                y += x[:, t:t + n2, v:v + m2, :] @ w[t, v]
    return y + b


def conv_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray, method: str = "auto",
                  need_dx: bool = True, cache: dict | None = None):
    """Gradients ``(dx, dw, db)`` of a valid correlation given ``dL/dy``.

    ``dx`` is ``None`` when ``need_dx`` is false.
    """
    t1, v1 = w.shape[:2]
    _, n2, m2, _ = dy.shape
    db = dy.sum(axis=(0, 1, 2))
    dx = None
    if method == "fft" or (method == "auto" and _use_fft(w.shape)):
        n, m = x.shape[1:3]
        s = _fft_size(n, m)
        fdy = _spectrum(dy, s, (1, 2))
        fx = cache.get("fx") if cache else None
        if fx is None:
            fx = _spectrum(x, s, (1, 2))
        if need_dx:
            fw = _spectrum(w, s, (0, 1))
            dx = _inverse(np.einsum("bnmk,nmlk->bnml", fdy, fw), s, (1, 2),
                          slice(0, n), slice(0, m))
        # sum of fx * conj(fdy), conjugating the smaller product instead
        cross = np.einsum("bnml,bnmk->nmlk", fx.conj(), fdy).conj()
        dw = np.ascontiguousarray(_inverse(cross, s, (0, 1), slice(0, t1), slice(0, v1)))
    else:
        if need_dx:
            dx = np.zeros_like(x)
        dw = np.empty_like(w)
        l = x.shape[3]
        flat_dy = dy.reshape(-1, dy.shape[3])
        for t in range(t1):
            for v in range(v1):
                xs = x[:, t:t + n2, v:v + m2, :]
                dw[t, v] = xs.reshape(-1, l).T @ flat_dy
                if need_dx:
                    dx[:, t:t + n2, v:v + m2, :] += dy @ w[t, v].T
    return dx, dw, db


def maxpool_forward(x: np.ndarray, t2: int, v2: int):
    """Block maxima; dimensions that do not divide are right-padded with -inf.

    Returns the pooled array and the flat in-block argmax for the backward pass.
    """
    bsz, n, m, l = x.shape
    n3, m3 = -(-n // t2), -(-m // v2)
    if (n3 * t2, m3 * v2) != (n, m):
        pad = np.full((bsz, n3 * t2, m3 * v2, l), -np.inf)
        pad[:, :n, :m] = x
        x = pad
    blocks = x.reshape(bsz, n3, t2, m3, v2, l).transpose(0, 1, 3, 5, 2, 4).reshape(
        bsz, n3, m3, l, t2 * v2)
    arg = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return y, arg


def maxpool_backward(dy: np.ndarray, arg: np.ndarray, in_shape, t2: int, v2: int) -> np.ndarray:
    bsz, n, m, l = in_shape
    n3, m3 = dy.shape[1:3]
    blocks = np.zeros((bsz, n3, m3, l, t2 * v2))
    np.put_along_axis(blocks, arg[..., None], dy[..., None], axis=-1)
    full = blocks.reshape(bsz, n3, m3, l, t2, v2).transpose(0, 1, 4, 2, 5, 3).reshape(
        bsz, n3 * t2, m3 * v2, l)
    return full[:, :n, :m]


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x):
    """Normalised exponentials over the map (last) axis."""
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_backward(p, dp):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Keep-mask scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def log_loss(pred: np.ndarray, label) -> np.ndarray:
    """``-ln pred[label]`` per row, with probabilities floored at 1e-12."""
    pred = np.atleast_2d(pred)
    idx = np.atleast_1d(np.asarray(label, dtype=np.int64))
    p = pred[np.arange(len(pred)), idx]
    return -np.log(np.maximum(p, LOG_EPS))


def log_loss_grad(pred: np.ndarray, label) -> np.ndarray:
    pred = np.atleast_2d(pred)
    idx = np.atleast_1d(np.asarray(label, dtype=np.int64))
    g = np.zeros_like(pred)
    rows = np.arange(len(pred))
    p = pred[rows, idx]
    g[rows, idx] = np.where(p > LOG_EPS, -1.0 / np.maximum(p, LOG_EPS), 0.0)
    return g


def euclidean_loss(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance per row."""
    pred, target = np.atleast_2d(pred), np.atleast_2d(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return ((pred - target) ** 2).sum(axis=-1)


def euclidean_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (np.atleast_2d(pred) - np.atleast_2d(target))
