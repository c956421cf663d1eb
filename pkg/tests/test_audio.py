import struct

import numpy as np
import pytest

from downbeat.audio import (CHROMA_STFT, LFS_STFT, MCQT_STFT, ODF_STFT, AudioClip,
                            AudioFormatError, InputTooShortError, StftConfig, frame_count,
                            load_audio, resample, stft_magnitude, write_wav)

from conftest import tone


@pytest.mark.parametrize("cfg, window, hop", [
    (CHROMA_STFT, 4096, 508), (LFS_STFT, 32, 4), (ODF_STFT, 1024, 512), (MCQT_STFT, 2048, 128),
])
def test_analysis_configs(cfg, window, hop):
    assert (cfg.window_samples, cfg.hop_samples) == (window, hop)


def test_config_rejects_hop_longer_than_window():
    with pytest.raises(ValueError):
        StftConfig(10.0, 20.0, 1000.0)


def test_frame_count_and_centres():
    clip = AudioClip(np.zeros(10_000), 44100.0)
    spec = stft_magnitude(clip, ODF_STFT)
    assert len(spec.frame_times) == frame_count(10_000, 1024, 512) == 18
    assert spec.frame_times[0] == pytest.approx(512 / 44100)
    assert np.allclose(np.diff(spec.frame_times), 512 / 44100)


def test_stft_peak_at_tone_frequency():
    clip = resample(tone(1000.0, 1.0), 11025.0)
    spec = stft_magnitude(clip, MCQT_STFT)
    peak = spec.bin_freqs[np.argmax(spec.magnitudes.mean(axis=0))]
    assert abs(peak - 1000.0) <= spec.bin_freqs[1]


def test_too_short_input():
    with pytest.raises(InputTooShortError):
        stft_magnitude(AudioClip(np.zeros(100), 44100.0), ODF_STFT)


def test_rate_mismatch():
    with pytest.raises(ValueError):
        stft_magnitude(AudioClip(np.zeros(5000), 22050.0), ODF_STFT)


def test_resample_length_and_identity():
    clip = tone(440.0, 1.0)
    assert resample(clip, 44100.0) is clip
    out = resample(clip, 5512.5)
    assert out.sample_rate == 5512.5
    assert len(out.samples) == pytest.approx(44100 / 8, abs=1)


def test_wav_roundtrip(tmp_path):
    clip = tone(440.0, 0.5)
    write_wav(tmp_path / "a.wav", clip)
    back = load_audio(tmp_path / "a.wav")
    assert back.sample_rate == 44100.0
    assert np.max(np.abs(back.samples - clip.samples)) < 1e-4


def test_stereo_is_averaged(tmp_path):
    from scipy.io import wavfile
    data = np.stack([np.full(1000, 8192, np.int16), np.zeros(1000, np.int16)], axis=1)
    wavfile.write(tmp_path / "s.wav", 8000, data)
    clip = load_audio(tmp_path / "s.wav")
    assert np.allclose(clip.samples, 0.125)


def _header(tag, bits, channels=1):
    fmt = struct.pack("<HHIIHH", tag, channels, 8000, 8000 * bits // 8, bits // 8, bits)
    return b"RIFF" + struct.pack("<I", 36) + b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt \
        + b"data" + struct.pack("<I", 0)


def test_mu_law_rejected_with_chunk_name(tmp_path):
    p = tmp_path / "mu.wav"
    p.write_bytes(_header(7, 8))
    with pytest.raises(AudioFormatError, match="fmt chunk: unsupported encoding mu-law, 8-bit"):
        load_audio(p)


def test_not_riff(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"hello world, not audio")
    with pytest.raises(AudioFormatError, match="RIFF"):
        load_audio(p)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_audio(tmp_path / "nope.wav")
