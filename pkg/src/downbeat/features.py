"""Chroma, low-frequency spectrogram, three-band onset function and melodic CQT.

Every extractor takes a :class:`~downbeat.audio.SpectralFrameSeries` computed
with its own analysis configuration (see ``audio.CHROMA_STFT`` and friends)
and returns a nonnegative :class:`FeatureMatrix` of shape frames x bins.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter, uniform_filter1d

from .audio import (AudioClip, SpectralFrameSeries, StftConfig, CHROMA_STFT, LFS_STFT,
                    MCQT_STFT, ODF_STFT, resample, stft_magnitude)


class FeatureKind(str, enum.Enum):
    CHROMA = "chroma"
    LFS = "lfs"
    ODF = "odf"
    MCQT = "mcqt"

    @property
    def n_bins(self) -> int:
        return _N_BINS[self]

    @property
    def stft_config(self) -> StftConfig:
        return _STFT[self]


_N_BINS = {FeatureKind.CHROMA: 12, FeatureKind.LFS: 10, FeatureKind.ODF: 3,
           FeatureKind.MCQT: 304}
_STFT = {FeatureKind.CHROMA: CHROMA_STFT, FeatureKind.LFS: LFS_STFT,
         FeatureKind.ODF: ODF_STFT, FeatureKind.MCQT: MCQT_STFT}


@dataclass(frozen=True)
class FeatureMatrix:
    kind: FeatureKind
    values: np.ndarray  # frames x bins
    frame_times: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.kind.n_bins:
            raise ValueError(f"{self.kind.value} needs {self.kind.n_bins} bins, "
                             f"got shape {self.values.shape}")
        if len(self.frame_times) != len(self.values):
            raise ValueError("one frame time per row required")

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CqtKernel:
    center_freqs: np.ndarray
    window_lengths: np.ndarray  # samples, Q * sr / f
    bins_per_octave: int
    matrix: np.ndarray  # cqt bins x stft bins, triangles with unit apex


def cqt_kernel(fmin: float, n_bins: int, bins_per_octave: int, sample_rate: float,
               n_fft: int) -> CqtKernel:
    """Triangular frequency-domain kernels applied to STFT magnitudes.

    A row spans ``f_k / Q`` on each side of its centre, widened to one STFT
    bin where the constant-Q band is narrower than the STFT resolution.
    """
    freqs = fmin * 2.0 ** (np.arange(n_bins) / bins_per_octave)
    if freqs[-1] >= sample_rate / 2:
        raise ValueError("top CQT bin is above Nyquist")
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    df = sample_rate / n_fft
    stft_freqs = np.arange(n_fft // 2 + 1) * df
    half = np.maximum(freqs / q, df)
    dist = np.abs(stft_freqs[None, :] - freqs[:, None]) / half[:, None]
    # unit analytic peak, so a sinusoid at any centre frequency gets the same gain
    m = np.clip(1.0 - dist, 0.0, None)
    return CqtKernel(freqs, q * sample_rate / freqs, bins_per_octave, m)


def decile_clip(values: np.ndarray, decile: float = 0.9) -> np.ndarray:
    """Replace everything above the ``decile`` quantile of the whole matrix
    by that quantile.

    The quantile is the order statistic at ``floor(decile * (n - 1))``, an
    actual matrix entry, so clipping twice changes nothing.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty matrix")
    if not 0.0 < decile <= 1.0:
        raise ValueError("decile must lie in (0, 1]")
    level = np.quantile(values, decile, method="lower")
    return np.minimum(values, level)


# chroma: bin 3p+1 sits on pitch class p (C=0) once tuned
_CHROMA_FMIN = 440.0 * 2.0 ** (-21 / 12) * 2.0 ** (-1 / 36)  # a third-semitone below C3
_CHROMA_BINS = 108
_CHROMA_BPO = 36
_HPCP_HARMONICS = 4
_HPCP_DECAY = 0.6


def _tuning_shift(profile36: np.ndarray) -> int:
    """Integer bin shift that centres spectral peaks on the middle of each
    third-of-a-semitone triple."""
    left = np.roll(profile36, 1, axis=1)
    right = np.roll(profile36, -1, axis=1)
    peaks = (profile36 > left) & (profile36 >= right) & (profile36 > 0)
    fr, b = np.nonzero(peaks)
    if len(b) == 0:
        return 0
    a, c, v = left[fr, b], right[fr, b], profile36[fr, b]
    denom = a - 2 * v + c
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(denom != 0, 0.5 * (a - c) / denom, 0.0)
    pos = b + np.clip(delta, -0.5, 0.5)
    dev = np.mod(pos - 1 + 1.5, 3.0) - 1.5  # deviation from triple centre, [-1.5, 1.5)
    hist, edges = np.histogram(dev, bins=30, range=(-1.5, 1.5), weights=v)
    mode = 0.5 * (edges[np.argmax(hist)] + edges[np.argmax(hist) + 1])
    return int(np.round(mode))


def compute_chroma(spec: SpectralFrameSeries) -> FeatureMatrix:
    n_fft = 2 * (spec.magnitudes.shape[1] - 1)
    sr = spec.bin_freqs[1] * n_fft
    kern = cqt_kernel(_CHROMA_FMIN, _CHROMA_BINS, _CHROMA_BPO, sr, n_fft)
    # energy per bin; unit-peak triangles spaced one half-width apart sum to one,
    # so a partial's energy is kept whatever its offset from the STFT grid
    cq = (spec.magnitudes ** 2) @ kern.matrix.T
    # harmonic pitch class profile: every bin also votes for the pitch classes
    # of its subharmonics; voting after the octave fold keeps votes whose
    # subharmonic lies below the lowest bin
    folded = cq.reshape(len(cq), -1, _CHROMA_BPO).sum(axis=1)
    profile = np.zeros_like(folded)
    for h in range(1, _HPCP_HARMONICS + 1):
        shift = int(round(_CHROMA_BPO * np.log2(h)))
        profile += _HPCP_DECAY ** (h - 1) * np.roll(folded, -shift, axis=1)
    profile = np.roll(profile, -_tuning_shift(profile), axis=1)
    # size-8 window covers frames t-4 .. t+3
    profile = median_filter(profile, size=(8, 1), mode="nearest")
    chroma = profile.reshape(len(profile), 12, 3).mean(axis=2)
    return FeatureMatrix(FeatureKind.CHROMA, np.maximum(chroma, 0.0), spec.frame_times)


def compute_lfs(spec: SpectralFrameSeries) -> FeatureMatrix:
    low = spec.magnitudes[:, :10]
    return FeatureMatrix(FeatureKind.LFS, decile_clip(low), spec.frame_times)


MU = 1e6
ODF_BANDS = ((0.0, 150.0), (150.0, 500.0), (500.0, 11025.0))
ODF_LOCAL_MEAN_SECONDS = 0.5


def onset_bands(spec: SpectralFrameSeries) -> np.ndarray:
    """Rectified three-band spectral flux before decile clipping."""
    mags = spec.magnitudes
    peak = mags.max()
    if peak <= 0:
        return np.zeros((len(mags), 3))
    comp = np.log1p(MU * mags / peak) / np.log1p(MU)
    diff = np.diff(comp, axis=0, prepend=comp[:1])
    freqs = spec.bin_freqs
    bands = []
    for i, (lo, hi) in enumerate(ODF_BANDS):
        sel = (freqs >= lo) & (freqs <= hi) if i == 0 else (freqs > lo) & (freqs <= hi)
        bands.append(diff[:, sel].sum(axis=1))
    flux = np.stack(bands, axis=1)
    width = max(1, int(round(ODF_LOCAL_MEAN_SECONDS / spec.hop_seconds)) | 1)
    local = uniform_filter1d(flux, size=width, axis=0, mode="nearest")
    return np.maximum(flux - local, 0.0)


def compute_odf(spec: SpectralFrameSeries) -> FeatureMatrix:
    return FeatureMatrix(FeatureKind.ODF, decile_clip(onset_bands(spec)), spec.frame_times)


def onset_function(clip: AudioClip) -> FeatureMatrix:
    """The three onset bands without decile clipping, for tempo analysis.

    Clipping whole-matrix deciles flattens sparse onset functions (a click
    track is zero in well over 90% of its frames), so the tatum tracker reads
    this version and the networks read :func:`compute_odf`.
    """
    cfg = FeatureKind.ODF.stft_config
    spec = stft_magnitude(resample(clip, cfg.sample_rate), cfg)
    return FeatureMatrix(FeatureKind.ODF, onset_bands(spec), spec.frame_times)


def clip_onset_function(raw: FeatureMatrix) -> FeatureMatrix:
    """:func:`compute_odf` output from :func:`onset_function` output."""
    return FeatureMatrix(FeatureKind.ODF, decile_clip(raw.values), raw.frame_times)


MCQT_FMIN = 196.0
MCQT_BPO = 96
MCQT_KEEP_FROM = 96  # 392 Hz
MCQT_KEEP_BINS = 304


def compute_mcqt(spec: SpectralFrameSeries) -> FeatureMatrix:
    n_fft = 2 * (spec.magnitudes.shape[1] - 1)
    sr = spec.bin_freqs[1] * n_fft
    n_bins = int(np.floor(MCQT_BPO * np.log2((sr / 2) / MCQT_FMIN)))
    while MCQT_FMIN * 2.0 ** (n_bins / MCQT_BPO) < sr / 2:
        n_bins += 1
    kern = cqt_kernel(MCQT_FMIN, n_bins, MCQT_BPO, sr, n_fft)
    q = spec.magnitudes @ kern.matrix.T
    # average every bin with its higher octaves up to Nyquist
    qa = np.zeros_like(q)
    count = np.zeros(n_bins)
    for j in range(0, n_bins // MCQT_BPO + 1):
        off = j * MCQT_BPO
        if off >= n_bins:
            break
        qa[:, :n_bins - off] += q[:, off:]
        count[:n_bins - off] += 1
    qa /= count
    lq = np.log(np.abs(qa[:, MCQT_KEEP_FROM:MCQT_KEEP_FROM + MCQT_KEEP_BINS]) + 1.0)
    q3 = np.quantile(lq, 0.75, axis=1, keepdims=True)
    return FeatureMatrix(FeatureKind.MCQT, np.maximum(lq - q3, 0.0), spec.frame_times)


_EXTRACTORS = {FeatureKind.CHROMA: compute_chroma, FeatureKind.LFS: compute_lfs,
               FeatureKind.ODF: compute_odf, FeatureKind.MCQT: compute_mcqt}


def compute_feature(clip: AudioClip, kind: FeatureKind) -> FeatureMatrix:
    kind = FeatureKind(kind)
    cfg = kind.stft_config
    spec = stft_magnitude(resample(clip, cfg.sample_rate), cfg)
    return _EXTRACTORS[kind](spec)


def compute_all(clip: AudioClip) -> dict[FeatureKind, FeatureMatrix]:
    return {kind: compute_feature(clip, kind) for kind in FeatureKind}
