import numpy as np
import pytest

from downbeat.features import FeatureKind, FeatureMatrix
from downbeat.sync import (SyncFeature, downbeat_tatum_indices, label_windows, make_inputs,
                           minmax_scale, mirror_index, padded_blocks, quantize_to_grid,
                           subdivision_times, window_batch)
from downbeat.tatums import TatumGrid


def _ramp_feature(n_frames=400, hop=0.01):
    t = np.arange(n_frames) * hop
    return FeatureMatrix(FeatureKind.ODF, np.column_stack([t, 2 * t, np.ones_like(t)]), t)


def test_subdivision_times():
    np.testing.assert_allclose(subdivision_times([0.0, 1.0, 1.5]),
                               [0, .2, .4, .6, .8, 1, 1.1, 1.2, 1.3, 1.4,
                                1.5, 1.6, 1.7, 1.8, 1.9])


def test_quantize_five_rows_per_tatum():
    grid = TatumGrid(np.array([0.5, 1.0, 1.5, 2.0]))
    sf = quantize_to_grid(_ramp_feature(), grid)
    assert sf.values.shape == (20, 3) and sf.n_tatums == 4
    # linear features are reproduced exactly at the subdivision instants
    np.testing.assert_allclose(sf.values[:, 0], subdivision_times(grid.tatum_times), atol=1e-12)


def test_quantize_needs_overlap():
    with pytest.raises(ValueError):
        quantize_to_grid(_ramp_feature(), TatumGrid(np.array([10.0, 11.0])))


def test_mirror_index():
    np.testing.assert_array_equal(mirror_index(np.arange(-3, 8), 5),
                                  [3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1])


def test_mirror_needs_two_tatums():
    with pytest.raises(ValueError):
        mirror_index([0], 1)


def _sync(n_tatums, bins=2):
    vals = np.repeat(np.arange(n_tatums, dtype=float), 5)[:, None] * np.ones(bins)
    return SyncFeature(FeatureKind.LFS, vals)


def test_padded_blocks_mirror_whole_tatums():
    padded = padded_blocks(_sync(6), 9)
    tatum_of_row = padded[::5, 0]
    np.testing.assert_array_equal(tatum_of_row, [4, 3, 2, 1, 0, 1, 2, 3, 4, 5, 4, 3, 2, 1])


@pytest.mark.parametrize("wt", [9, 17])
def test_inputs_have_window_shape_and_range(wt, rng):
    sf = SyncFeature(FeatureKind.CHROMA, rng.random((5 * 30, 12)))
    inputs = make_inputs(sf, wt)
    assert len(inputs) == 30
    for inp in inputs:
        assert inp.window.shape == (5 * wt, 12)
        assert inp.window.min() == 0.0 and inp.window.max() == 1.0
        assert inp.covered_tatums[wt // 2] == inp.center_tatum


def test_bad_window_size():
    with pytest.raises(ValueError):
        make_inputs(_sync(10), 11)


def test_minmax_constant_window_is_zero():
    out = minmax_scale(np.full((2, 4, 3), 7.0))
    assert np.all(out == 0)


def test_minmax_idempotent_and_bounded(rng):
    x = rng.normal(size=(5, 10, 4)) * 100
    once = minmax_scale(x)
    assert once.min() >= 0 and once.max() <= 1
    np.testing.assert_allclose(minmax_scale(once), once, atol=1e-15)


def test_window_batch_matches_make_inputs(rng):
    sf = SyncFeature(FeatureKind.ODF, rng.random((5 * 12, 3)))
    batch = window_batch(padded_blocks(sf, 17), [0, 5, 11], 17)
    inputs = make_inputs(sf, 17)
    for row, k in zip(batch, [0, 5, 11]):
        np.testing.assert_array_equal(row, inputs[k].window)


def test_labels():
    inputs = make_inputs(_sync(12), 9)
    single = label_windows(inputs, [0, 4, 8], multi_label=False)
    assert [i.label for i in single] == [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]
    multi = label_windows(inputs, [0, 4, 8], multi_label=True)
    np.testing.assert_array_equal(multi[4].label, [1, 0, 0, 0, 1, 0, 0, 0, 1])
    # mirrored left edge: tatums 4 3 2 1 0 1 2 3 4
    np.testing.assert_array_equal(multi[0].label, [1, 0, 0, 0, 1, 0, 0, 0, 1])


def test_downbeat_tatum_indices():
    tatums = np.arange(0.0, 10.0, 0.25)
    idx = downbeat_tatum_indices(tatums, [0.02, 1.0, 2.06, 3.125])
    np.testing.assert_array_equal(idx, [0, 4, 8])


def test_quantize_commutes_with_time_shift(rng):
    t = np.arange(300) * 0.0116
    feat = FeatureMatrix(FeatureKind.LFS, rng.random((300, 10)), t)
    grid = TatumGrid(np.sort(rng.uniform(0.2, 3.0, size=12)))
    a = quantize_to_grid(feat, grid)
    shifted = FeatureMatrix(FeatureKind.LFS, feat.values, t + 1.5)
    b = quantize_to_grid(shifted, TatumGrid(grid.tatum_times + 1.5))
    np.testing.assert_allclose(a.values, b.values, atol=1e-9)
