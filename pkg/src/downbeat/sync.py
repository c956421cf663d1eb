"""Tatum-synchronous features and fixed-length network windows.

Each feature is resampled at five equally spaced instants per tatum interval.
A window covers 9 or 17 whole tatums and belongs to the tatum in its middle;
song edges are padded by mirroring whole tatum blocks so that every tatum gets
exactly one window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureKind, FeatureMatrix
from .tatums import TatumGrid

SUBDIVISIONS = 5
WINDOW_TATUMS = (9, 17)


@dataclass(frozen=True)
class SyncFeature:
    kind: FeatureKind
    values: np.ndarray  # (5 * n_tatums) x bins

    def __post_init__(self):
        if self.values.ndim != 2 or len(self.values) % SUBDIVISIONS:
            raise ValueError("values must have 5 rows per tatum")

    @property
    def n_tatums(self) -> int:
        return len(self.values) // SUBDIVISIONS

    @property
    def tatum_index(self) -> np.ndarray:
        """Tatum owning each row."""
        return np.repeat(np.arange(self.n_tatums), SUBDIVISIONS)

    def blocks(self) -> np.ndarray:
        """View as n_tatums x 5 x bins."""
        return self.values.reshape(self.n_tatums, SUBDIVISIONS, -1)


@dataclass(frozen=True)
class NetworkInput:
    window: np.ndarray  # N0 x M0, scaled to [0, 1]
    center_tatum: int
    covered_tatums: np.ndarray  # source tatum of each block, after mirroring
    label: np.ndarray | int | None = None


def subdivision_times(tatum_times) -> np.ndarray:
    """Five instants per tatum; the last tatum reuses the previous interval."""
    t = np.asarray(tatum_times, dtype=np.float64)
    if len(t) < 2:
        raise ValueError("grid needs at least two tatums")
    step = np.append(np.diff(t), t[-1] - t[-2])
    frac = np.arange(SUBDIVISIONS) / SUBDIVISIONS
    return (t[:, None] + step[:, None] * frac[None, :]).ravel()


def quantize_to_grid(feat: FeatureMatrix, grid: TatumGrid) -> SyncFeature:
    """Linear interpolation of every bin at the subdivision instants.

    Instants outside the feature's frame span take the nearest frame value.
    """
    times = subdivision_times(grid.tatum_times)
    ft = feat.frame_times
    if len(ft) == 0 or times[-1] < ft[0] or times[0] > ft[-1]:
        raise ValueError("feature frames and tatum grid do not overlap")
    out = np.empty((len(times), feat.n_bins))
    for j in range(feat.n_bins):
        out[:, j] = np.interp(times, ft, feat.values[:, j])
    return SyncFeature(feat.kind, out)


def _check_window(window_tatums: int) -> int:
    if window_tatums not in WINDOW_TATUMS:
        raise ValueError(f"window_tatums must be one of {WINDOW_TATUMS}")
    return window_tatums // 2


def mirror_index(idx, n: int) -> np.ndarray:
    """Map tatum indices outside ``[0, n)`` back by reflection about the end
    tatums (numpy ``reflect`` convention, edge not repeated)."""
    if n < 2:
        raise ValueError("reflection needs at least two tatums")
    period = 2 * (n - 1)
    r = np.mod(np.asarray(idx), period)
    return np.where(r < n, r, period - r)


def padded_blocks(sf: SyncFeature, window_tatums: int) -> np.ndarray:
    """Tatum blocks with ``window_tatums // 2`` mirrored blocks on each side,
    flattened back to rows."""
    half = _check_window(window_tatums)
    n = sf.n_tatums
    src = mirror_index(np.arange(-half, n + half), n)
    return sf.blocks()[src].reshape(-1, sf.values.shape[1])


def minmax_scale(x: np.ndarray) -> np.ndarray:
    """Scale each window (leading axis) to [0, 1]; constant windows become 0."""
    x = np.asarray(x, dtype=np.float64)
    axes = tuple(range(1, x.ndim))
    lo = x.min(axis=axes, keepdims=True)
    span = x.max(axis=axes, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def window_batch(padded: np.ndarray, centers, window_tatums: int) -> np.ndarray:
    """Scaled windows for the given center tatums, shape B x N0 x M0.

    ``padded`` comes from :func:`padded_blocks` with the same window size.
    """
    length = window_tatums * SUBDIVISIONS
    starts = np.asarray(centers, dtype=np.int64) * SUBDIVISIONS
    rows = starts[:, None] + np.arange(length)[None, :]
    return minmax_scale(padded[rows])


def make_inputs(sf: SyncFeature, window_tatums: int) -> list[NetworkInput]:
    half = _check_window(window_tatums)
    n = sf.n_tatums
    padded = padded_blocks(sf, window_tatums)
    wins = window_batch(padded, np.arange(n), window_tatums)
    return [NetworkInput(wins[k], k, mirror_index(np.arange(k - half, k + half + 1), n))
            for k in range(n)]


def label_vector(downbeat_tatums, n_tatums: int) -> np.ndarray:
    """0/1 per tatum."""
    g = np.zeros(n_tatums, dtype=np.int64)
    idx = np.asarray(sorted(set(int(i) for i in downbeat_tatums)), dtype=np.int64)
    if len(idx) and (idx[0] < 0 or idx[-1] >= n_tatums):
        raise ValueError("downbeat tatum index out of range")
    g[idx] = 1
    return g


def label_windows(inputs: list[NetworkInput], downbeat_tatums,
                  multi_label: bool) -> list[NetworkInput]:
    """Attach the center label, or one label per covered tatum."""
    if not inputs:
        return []
    n = max(int(inp.covered_tatums.max()) for inp in inputs) + 1
    n = max(n, max(inp.center_tatum for inp in inputs) + 1)
    g = label_vector(downbeat_tatums, n)
    out = []
    for inp in inputs:
        label = g[inp.covered_tatums].astype(np.float64) if multi_label else int(g[inp.center_tatum])
        out.append(NetworkInput(inp.window, inp.center_tatum, inp.covered_tatums, label))
    return out


def downbeat_tatum_indices(tatum_times, downbeat_times, tolerance: float = 0.07) -> np.ndarray:
    """Nearest tatum to each annotated downbeat, when within ``tolerance``."""
    t = np.asarray(tatum_times, dtype=np.float64)
    d = np.asarray(downbeat_times, dtype=np.float64)
    if len(t) == 0 or len(d) == 0:
        return np.zeros(0, dtype=np.int64)
    pos = np.clip(np.searchsorted(t, d), 1, len(t) - 1) if len(t) > 1 else np.zeros(len(d), int)
    left = np.maximum(pos - 1, 0)
    choose = np.where(np.abs(t[left] - d) <= np.abs(t[pos] - d), left, pos)
    ok = np.abs(t[choose] - d) <= tolerance + 1e-9
    return np.unique(choose[ok])
