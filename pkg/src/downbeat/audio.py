"""WAV input, resampling and magnitude STFTs.

The four analysis configurations below come from the per-feature STFT table:
window and hop in milliseconds at a per-feature sampling rate. Milliseconds
are converted with ``round(ms * sr / 1000)``; a window that lands within one
sample of a power of two is snapped to it (1023 -> 1024 for the onset
function).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly
from scipy.signal.windows import hann


class AudioFormatError(ValueError):
    """Raised for WAV files this package does not decode."""


class InputTooShortError(ValueError):
    """Raised when a clip cannot fill a single analysis window."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip holds mono samples only")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _ms_to_samples(ms: float, sr: float) -> int:
    n = int(round(ms * sr / 1000.0))
    p2 = 1 << max(0, int(round(np.log2(max(n, 1)))))
    return p2 if abs(p2 - n) <= 1 else n


@dataclass(frozen=True)
class StftConfig:
    window_ms: float
    hop_ms: float
    sample_rate: float

    @property
    def window_samples(self) -> int:
        return _ms_to_samples(self.window_ms, self.sample_rate)

    @property
    def hop_samples(self) -> int:
        return max(1, int(round(self.hop_ms * self.sample_rate / 1000.0)))

    def __post_init__(self):
        if not self.window_samples >= self.hop_samples >= 1:
            raise ValueError("need window_samples >= hop_samples >= 1")


CHROMA_STFT = StftConfig(743.0, 92.2, 5512.5)
LFS_STFT = StftConfig(64.0, 8.0, 500.0)
ODF_STFT = StftConfig(23.2, 11.6, 44100.0)
MCQT_STFT = StftConfig(185.8, 11.6, 11025.0)


@dataclass(frozen=True)
class SpectralFrameSeries:
    magnitudes: np.ndarray  # frames x bins
    frame_times: np.ndarray
    bin_freqs: np.ndarray
    hop_seconds: float


# RIFF/WAVE format tags
_WAVE_PCM = 1
_WAVE_FLOAT = 3
_WAVE_EXTENSIBLE = 0xFFFE
_TAG_NAMES = {2: "ADPCM", 6: "A-law", 7: "mu-law", 0x55: "MPEG layer 3"}


def _check_wav_header(path: Path) -> None:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] not in (b"RIFF", b"RF64") or head[8:12] != b"WAVE":
            raise AudioFormatError(f"{path}: RIFF header: not a WAVE file")
        while True:
            chunk = fh.read(8)
            if len(chunk) < 8:
                raise AudioFormatError(f"{path}: fmt chunk: missing")
            cid, size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
            if cid != b"fmt ":
                fh.seek(size + (size & 1), 1)
                continue
            body = fh.read(size)
            tag, channels, _, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _WAVE_EXTENSIBLE and size >= 26:
                tag = struct.unpack("<H", body[24:26])[0]
            break
    if tag == _WAVE_PCM and bits in (16, 24):
        pass
    elif tag == _WAVE_FLOAT and bits == 32:
        pass
    else:
        name = _TAG_NAMES.get(tag, f"format tag {tag}")
        raise AudioFormatError(
            f"{path}: fmt chunk: unsupported encoding {name}, {bits}-bit "
            "(expected 16/24-bit PCM or 32-bit float)")
    if channels not in (1, 2):
        raise AudioFormatError(f"{path}: fmt chunk: {channels} channels (expected 1 or 2)")


def load_audio(path) -> AudioClip:
    """Read a PCM WAV file as a mono clip with amplitudes in [-1, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"audio file not found: {path}")
    _check_wav_header(path)
    sr, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-aligns 24-bit samples in int32
        x = data.astype(np.float64) / 2147483648.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioClip(np.clip(x, -1.0, 1.0), float(sr))


def write_wav(path, clip: AudioClip) -> None:
    """Write 16-bit PCM. Sample rate must be an integer number of Hz."""
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0 - 1.0 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(path, int(round(clip.sample_rate)), pcm)


def resample(clip: AudioClip, target_rate: float) -> AudioClip:
    """Polyphase band-limited resampling to ``target_rate``."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    ratio = Fraction(target_rate / clip.sample_rate).limit_denominator(10000)
    y = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    return AudioClip(y, float(target_rate))


def frame_count(n_samples: int, window: int, hop: int) -> int:
    return (n_samples - window) // hop + 1


def stft_magnitude(clip: AudioClip, config: StftConfig) -> SpectralFrameSeries:
    """Hann-windowed magnitude STFT; frame times are frame centres."""
    if abs(clip.sample_rate - config.sample_rate) > 1e-9:
        raise ValueError(
            f"clip rate {clip.sample_rate} does not match config rate {config.sample_rate}")
    w, h = config.window_samples, config.hop_samples
    n = len(clip.samples)
    if n < w:
        raise InputTooShortError(f"clip has {n} samples, window needs {w}")
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, w)[::h]
    window = hann(w, sym=False)
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    times = (np.arange(len(frames)) * h + w / 2.0) / config.sample_rate
    freqs = np.arange(w // 2 + 1) * config.sample_rate / w
    return SpectralFrameSeries(mags, times, freqs, h / config.sample_rate)
