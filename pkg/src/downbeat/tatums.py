"""Tatum segmentation from the onset function.

Fourier tempogram of the summed onset bands, a dynamic-programming path
through its magnitudes, a predominant-local-pulse (PLP) curve rebuilt from the
path's tempo and phase, and peak picking on that curve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import hann

from . import kernels
from .features import FeatureKind, FeatureMatrix

log = logging.getLogger(__name__)

TEMPOGRAM_SECONDS = 6.0
MIN_RPM = 60.0
MAX_RPM = 500.0
RPM_STEP = 1.0
DP_WEIGHTS = np.array([0.5, 0.7, 1.0, 0.7, 0.5])
PEAK_THRESHOLD = 0.1
FALLBACK_PERIOD = 0.25


class SegmentationError(RuntimeError):
    """No tatum could be picked from the pulse curve."""


@dataclass(frozen=True)
class Tempogram:
    magnitudes: np.ndarray  # frames x tempo bins
    phases: np.ndarray  # radians; pulse is cos(2 pi f t - phase)
    tempo_axis: np.ndarray  # repetitions per minute
    frame_times: np.ndarray
    frame_rate: float
    window: np.ndarray  # analysis window, reused for resynthesis


@dataclass(frozen=True)
class PeriodicityPath:
    bins: np.ndarray
    tempo: np.ndarray  # repetitions per minute
    score: float


@dataclass(frozen=True)
class TatumGrid:
    tatum_times: np.ndarray
    plp: np.ndarray | None = None
    plp_times: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.tatum_times, dtype=np.float64)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValueError("tatum times must be strictly increasing")
        object.__setattr__(self, "tatum_times", t)

    def __len__(self):
        return len(self.tatum_times)


def compute_tempogram(odf: FeatureMatrix, window_seconds: float = TEMPOGRAM_SECONDS,
                      min_rpm: float = MIN_RPM, max_rpm: float = MAX_RPM,
                      rpm_step: float = RPM_STEP) -> Tempogram:
    """Complex Fourier tempogram, one column per onset-function frame.

    Coefficients are referenced to absolute frame times, so the stored phase
    gives the pulse ``cos(2*pi*f*t - phase)`` directly.
    """
    if odf.kind != FeatureKind.ODF:
        raise ValueError("tempogram needs the onset detection function")
    novelty = odf.values.sum(axis=1)
    times = odf.frame_times
    if len(times) < 2:
        raise ValueError("onset function needs at least two frames")
    fps = 1.0 / (times[1] - times[0])
    width = int(round(window_seconds * fps)) | 1
    if len(novelty) < width:
        raise ValueError(f"clip too short for a {window_seconds:g} s tempogram window")
    half = width // 2
    window = hann(width, sym=True)
    padded = np.concatenate([np.zeros(half), novelty, np.zeros(half)])
    segs = np.lib.stride_tricks.sliding_window_view(padded, width) * window
    rpm = np.arange(min_rpm, max_rpm + 0.5 * rpm_step, rpm_step)
    freqs = rpm / 60.0
    m = np.arange(width) - half
    arg = 2 * np.pi * np.outer(m / fps, freqs)
    coef = segs @ np.cos(arg) - 1j * (segs @ np.sin(arg))
    coef *= np.exp(-2j * np.pi * np.outer(times, freqs))
    return Tempogram(np.abs(coef), -np.angle(coef), rpm, times, fps, window)


def best_path_dp(tg: Tempogram, weights=DP_WEIGHTS) -> PeriodicityPath:
    """Path maximising the sum of ``weight(bin step) * magnitude``.

    Steps are limited to +-2 bins; ties go to the smaller bin index.
    """
    if tg.magnitudes.size == 0:
        raise ValueError("empty tempogram")
    bins, score = kernels.periodicity_dp(tg.magnitudes, weights)
    return PeriodicityPath(bins, tg.tempo_axis[bins], score)


def path_score(mag: np.ndarray, bins, weights=DP_WEIGHTS) -> float:
    """Score of an explicit bin path, accumulated in the decoder's order."""
    r = (len(weights) - 1) // 2
    s = mag[0, bins[0]]
    for t in range(1, len(bins)):
        step = bins[t] - bins[t - 1]
        if abs(step) > r:
            return -np.inf
        s = s + weights[step + r] * mag[t, bins[t]]
    return float(s)


def build_plp(tg: Tempogram, path: PeriodicityPath) -> np.ndarray:
    """Overlap-add of unit windowed cosines along the path, half-wave rectified.

    Sampled at the tempogram frame times; all zero for a silent tempogram.
    """
    if not np.any(tg.magnitudes > 0):
        return np.zeros(len(tg.frame_times))
    fps = tg.frame_rate
    k = np.arange(len(path.bins))
    freqs = path.tempo / 60.0
    phases = tg.phases[k, path.bins]
    omega = 2 * np.pi * freqs / fps
    offset = 2 * np.pi * freqs * tg.frame_times[0] - phases
    curve = kernels.overlap_add_cosines(len(tg.frame_times), omega, offset, tg.window)
    return np.maximum(curve, 0.0)


def pick_tatums(plp: np.ndarray, times: np.ndarray, threshold: float = PEAK_THRESHOLD,
                min_interval: float = 60.0 / MAX_RPM) -> TatumGrid:
    """Local maxima above ``threshold * max``, refined by parabolic
    interpolation; peaks closer than ``min_interval`` keep the larger one."""
    plp = np.asarray(plp, dtype=np.float64)
    top = plp.max() if plp.size else 0.0
    if top <= 0:
        raise SegmentationError("pulse curve is empty or all zero")
    i = np.arange(1, len(plp) - 1)
    is_peak = (plp[i] > plp[i - 1]) & (plp[i] >= plp[i + 1]) & (plp[i] > threshold * top)
    idx = i[is_peak]
    if len(idx) == 0:
        raise SegmentationError("no pulse peak above threshold")
    a, b, c = plp[idx - 1], plp[idx], plp[idx + 1]
    denom = a - 2 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(denom != 0, 0.5 * (a - c) / denom, 0.0)
    step = times[1] - times[0]
    peak_t = times[idx] + np.clip(delta, -0.5, 0.5) * step
    kept_t, kept_v = [], []
    for t, v in zip(peak_t, b):
        if kept_t and t - kept_t[-1] < min_interval:
            if v > kept_v[-1]:
                kept_t[-1], kept_v[-1] = t, v
            continue
        kept_t.append(t)
        kept_v.append(v)
    return TatumGrid(np.array(kept_t), plp, times)


def fallback_grid(duration: float, period: float = FALLBACK_PERIOD) -> TatumGrid:
    return TatumGrid(np.arange(0.0, duration, period))


def track_tatums(odf: FeatureMatrix, duration: float | None = None) -> TatumGrid:
    """Full segmentation; falls back to a uniform 250 ms grid on failure."""
    try:
        tg = compute_tempogram(odf)
        path = best_path_dp(tg)
        return pick_tatums(build_plp(tg, path), tg.frame_times)
    except (SegmentationError, ValueError) as err:
        if duration is None:
            duration = float(odf.frame_times[-1])
        log.warning("tatum segmentation failed (%s); using a %g s grid", err, FALLBACK_PERIOD)
        return fallback_grid(duration)


def substitute_annotated_grid(grid: TatumGrid | None, annotated_beats, factor: int = 2) -> TatumGrid:
    """Tatums from annotated beats with ``factor - 1`` equal insertions per
    interval. ``grid`` is accepted for interface symmetry and ignored."""
    beats = np.asarray(annotated_beats, dtype=np.float64)
    if len(beats) < 2:
        raise ValueError("need at least two annotated beats")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if np.any(np.diff(beats) <= 0):
        raise ValueError("annotated beats must be strictly increasing")
    frac = np.arange(factor) / factor
    inner = (beats[:-1, None] + np.diff(beats)[:, None] * frac[None, :]).ravel()
    return TatumGrid(np.append(inner, beats[-1]))


def snap_downbeats(grid: TatumGrid, annotated_downbeats) -> TatumGrid:
    """Move the nearest tatum onto each annotated downbeat.

    Downbeats whose nearest tatum is already claimed are inserted instead.
    Unclaimed tatums that end up out of order are dropped.
    """
    times = grid.tatum_times.copy()
    if len(times) == 0:
        raise ValueError("empty grid")
    fixed = np.zeros(len(times), dtype=bool)
    extra = []
    for d in np.asarray(annotated_downbeats, dtype=np.float64):
        i = int(np.argmin(np.abs(grid.tatum_times - d)))
        if fixed[i]:
            extra.append(d)
            continue
        times[i] = d
        fixed[i] = True
    if extra:
        times = np.concatenate([times, extra])
        fixed = np.concatenate([fixed, np.ones(len(extra), dtype=bool)])
        order = np.argsort(times, kind="stable")
        times, fixed = times[order], fixed[order]
    # next fixed time to the right of each position
    nxt = np.full(len(times), np.inf)
    upcoming = np.inf
    for j in range(len(times) - 1, -1, -1):
        nxt[j] = upcoming
        if fixed[j]:
            upcoming = times[j]
    keep, last = [], -np.inf
    for j, t in enumerate(times):
        if fixed[j]:
            if t > last:
                keep.append(t)
                last = t
        elif last < t < nxt[j]:
            keep.append(t)
            last = t
    return TatumGrid(np.array(keep), grid.plp, grid.plp_times)
