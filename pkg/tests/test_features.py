import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from downbeat.audio import ODF_STFT, AudioClip, resample, stft_magnitude
from downbeat.features import (MCQT_BPO, MCQT_FMIN, MCQT_KEEP_FROM, FeatureKind, compute_all,
                               compute_feature, decile_clip, onset_bands)

from conftest import clicks, tone


def _chroma_mean(clip):
    return compute_feature(clip, FeatureKind.CHROMA).values.mean(axis=0)


def test_bin_counts():
    feats = compute_all(tone(440.0, 3.0))
    assert {k: f.n_bins for k, f in feats.items()} == {
        FeatureKind.CHROMA: 12, FeatureKind.LFS: 10, FeatureKind.ODF: 3, FeatureKind.MCQT: 304}


def test_silence_gives_zero_chroma():
    clip = AudioClip(np.zeros(3 * 44100), 44100.0)
    assert np.all(compute_feature(clip, FeatureKind.CHROMA).values == 0)


def test_a440_peaks_on_pitch_class_a():
    assert np.argmax(_chroma_mean(tone(440.0))) == 9


def test_c_major_triad():
    c = 261.63
    prof = _chroma_mean(tone([c, c * 2 ** (4 / 12), c * 2 ** (7 / 12)]))
    assert set(np.argsort(prof)[-3:]) == {0, 4, 7}


def test_chroma_transposition():
    c = 261.63
    notes = np.array([c, c * 2 ** (4 / 12), c * 2 ** (7 / 12)])
    a = _chroma_mean(tone(notes))
    b = _chroma_mean(tone(notes * 2 ** (1 / 12)))
    assert np.abs(np.roll(a, 1) - b).max() <= 0.1 * a.max()


def test_lfs_100hz_in_bin_6():
    prof = compute_feature(tone(100.0), FeatureKind.LFS).values.mean(axis=0)
    assert np.argmax(prof) == 6


def test_decile_clip_matches_sorted_oracle(rng):
    x = rng.exponential(size=(37, 5))
    s = np.sort(x.ravel())
    level = s[int(np.floor(0.9 * (s.size - 1)))]
    np.testing.assert_allclose(decile_clip(x), np.minimum(x, level), rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 6)),
              elements=st.floats(0, 1e6)))
def test_decile_clip_idempotent(x):
    once = decile_clip(x)
    np.testing.assert_array_equal(decile_clip(once), once)


def test_decile_clip_one_to_ten():
    out = decile_clip(np.arange(1.0, 11.0))
    assert out.max() == 9.0
    assert np.sum(out == np.arange(1.0, 11.0)) == 9


def test_decile_clip_rejects_empty():
    with pytest.raises(ValueError):
        decile_clip(np.zeros((0, 3)))


def test_odf_click_peaks_at_click():
    spec = stft_magnitude(resample(clicks([1.5], 3.0), 44100.0), ODF_STFT)
    bands = onset_bands(spec)
    for b in range(3):
        assert abs(spec.frame_times[np.argmax(bands[:, b])] - 1.5) <= spec.hop_seconds


def test_odf_steady_tone_is_small_after_attack():
    x = tone(440.0, 3.0).samples.copy()
    x[:22050] = 0.0
    spec = stft_magnitude(AudioClip(x, 44100.0), ODF_STFT)
    total = onset_bands(spec).sum(axis=1)
    steady = (spec.frame_times > 1.2) & (spec.frame_times < 2.5)
    assert total[steady].max() < 0.05 * total.max()


def test_mcqt_is_sparse():
    m = compute_feature(tone([220.0, 440.0, 660.0]), FeatureKind.MCQT).values
    assert np.all((m == 0).mean(axis=1) >= 0.75)


def test_mcqt_a440_location():
    m = compute_feature(tone(440.0, 2.0), FeatureKind.MCQT).values[3:-3]
    freqs = MCQT_FMIN * 2.0 ** ((MCQT_KEEP_FROM + np.arange(304)) / MCQT_BPO)
    k = int(np.argmin(np.abs(freqs - 440.0)))
    assert abs(int(np.argmax(m.sum(axis=0))) - k) <= 2
    mass = m.sum(axis=0)
    assert mass[k - 12:k + 13].sum() >= 0.95 * mass.sum()


def test_features_nonnegative(rng):
    clip = AudioClip(0.1 * rng.standard_normal(3 * 44100), 44100.0)
    for f in compute_all(clip).values():
        assert np.all(f.values >= 0)
        assert np.all(np.diff(f.frame_times) > 0)
