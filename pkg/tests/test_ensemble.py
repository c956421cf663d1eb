import numpy as np
import pytest

from downbeat.ensemble import (EnsembleModel, LikelihoodSeries, TrainConfig, WindowSet,
                               augment_chroma_shifts, average_overlaps, balance_classes,
                               balance_indices, default_specs, fuse_average, infer_likelihood,
                               train_network)
from downbeat.features import FeatureKind
from downbeat.nn import LayerSpec, NetworkSpec, dropout, forward, maxpool, relu, softmax
from downbeat.sync import SyncFeature, label_windows, make_inputs


def _toy_song(rng, n_tatums=40, period=4, bins=12):
    """Chroma-like feature with a bright block on every downbeat tatum."""
    vals = 0.1 * rng.random((5 * n_tatums, bins))
    db = np.arange(0, n_tatums, period)
    for k in db:
        vals[5 * k:5 * k + 5, : bins // 2] += 1.0
    return SyncFeature(FeatureKind.CHROMA, vals), db


def _toy_spec():
    return NetworkSpec("toy", (45, 12), (
        LayerSpec((5, 3, 1, 4), (relu(), maxpool(3, 2))),
        LayerSpec((14, 5, 4, 6), (relu(), dropout(0.2))),
        LayerSpec((1, 1, 6, 2), (softmax(),)),
    ), "log")


def test_chroma_shift_augmentation(rng):
    inputs = make_inputs(SyncFeature(FeatureKind.CHROMA, rng.random((5 * 6, 12))), 9)
    aug = augment_chroma_shifts(inputs)
    assert len(aug) == 12 * len(inputs)
    np.testing.assert_array_equal(aug[0].window, inputs[0].window)
    for s in range(12):
        back = np.roll(aug[s].window, 12 - s, axis=-1)
        np.testing.assert_array_equal(back, inputs[0].window)


def test_balance_indices(rng):
    labels = np.array([1] * 5 + [0] * 20)
    idx = balance_indices(labels, rng)
    assert np.sum(labels[idx] == 1) == 5 and np.sum(labels[idx] == 0) == 5
    assert np.all(np.diff(idx) > 0)
    even = np.array([0, 1, 0, 1])
    np.testing.assert_array_equal(balance_indices(even, rng), np.arange(4))
    with pytest.raises(ValueError):
        balance_indices(np.zeros(4), rng)


def test_balance_classes(rng):
    sf, db = _toy_song(rng)
    inputs = label_windows(make_inputs(sf, 9), db, multi_label=False)
    out = balance_classes(inputs, rng)
    assert sum(i.label for i in out) * 2 == len(out)


def test_window_set_batches(rng):
    songs = [_toy_song(rng) for _ in range(2)]
    ws = WindowSet.from_songs(FeatureKind.CHROMA, [s for s, _ in songs], [d for _, d in songs])
    assert len(ws) == 80
    x, y = ws.batch(np.array([0, 1, 45]), multi_label=False)
    assert x.shape == (3, 45, 12)
    np.testing.assert_array_equal(y, [1, 0, 0])
    shifted = ws.with_chroma_shifts()
    assert len(shifted) == 12 * len(ws)
    xs, _ = shifted.batch(np.array([3]), multi_label=False)
    np.testing.assert_array_equal(xs[0], np.roll(x[0], 3, axis=-1))
    bal = ws.balanced(rng)
    assert bal.center_labels().mean() == 0.5
    _, ym = ws.batch(np.array([4]), multi_label=True)
    np.testing.assert_array_equal(ym[0], [1, 0, 0, 0, 1, 0, 0, 0, 1])


def test_average_overlaps_example():
    # three windows of width 3 covering tatum 1 at positions 2, 1 and 0
    out = np.array([[0.0, 0.0, 0.2], [0.0, 0.4, 0.0], [0.6, 0.0, 0.0]])
    np.testing.assert_allclose(average_overlaps(out, 3)[1], 0.4)


def test_fuse_average():
    series = [LikelihoodSeries(np.full(5, v), s) for v, s in
              [(0.2, "a"), (0.4, "b"), (0.6, "c"), (0.8, "d")]]
    np.testing.assert_allclose(fuse_average(series).values, 0.5)
    with pytest.raises(ValueError):
        fuse_average([series[0], series[0]])
    with pytest.raises(ValueError):
        fuse_average([series[0], LikelihoodSeries(np.zeros(3), "x")])
    with pytest.raises(ValueError):
        LikelihoodSeries(np.array([1.5]), "x")


def _train(rng, epochs, lr=0.05, seed=3):
    songs = [_toy_song(rng) for _ in range(3)]
    ws = WindowSet.from_songs(FeatureKind.CHROMA, [s for s, _ in songs], [d for _, d in songs])
    return train_network(_toy_spec(), ws, TrainConfig(epochs, lr, 0.9, 16, seed)), ws


def test_training_learns_toy_task():
    res, ws = _train(np.random.default_rng(0), epochs=15)
    assert res.loss_curve[-1] < 0.5 * res.loss_curve[0]
    x, y = ws.batch(np.arange(len(ws)), multi_label=False)
    pred = forward(_toy_spec(), res.params, x).argmax(axis=1)
    assert np.mean(pred == y) >= 0.95


def test_training_is_deterministic():
    a, _ = _train(np.random.default_rng(0), epochs=2)
    b, _ = _train(np.random.default_rng(0), epochs=2)
    assert a.loss_curve == b.loss_curve
    for u, v in zip(a.params.arrays(), b.params.arrays()):
        np.testing.assert_array_equal(u, v)


def test_zero_learning_rate_keeps_initialisation():
    from downbeat.nn import init_parameters
    res, _ = _train(np.random.default_rng(0), epochs=1, lr=0.0)
    init = init_parameters(_toy_spec(), np.random.default_rng(3))
    for u, v in zip(res.params.arrays(), init.arrays()):
        np.testing.assert_array_equal(u, v)


def test_bundle_roundtrip(tmp_path, rng):
    specs = default_specs(reduced=True)
    from downbeat.nn import init_parameters
    params = {k: init_parameters(s, rng) for k, s in specs.items()}
    model = EnsembleModel(specs, params, {"note": "x"})
    model.save(tmp_path / "b")
    loaded = EnsembleModel.load(tmp_path / "b")
    assert loaded.kinds == list(FeatureKind) and loaded.metadata["note"] == "x"
    sync = {FeatureKind.CHROMA: SyncFeature(FeatureKind.CHROMA, rng.random((50, 12))),
            FeatureKind.LFS: SyncFeature(FeatureKind.LFS, rng.random((50, 10))),
            FeatureKind.ODF: SyncFeature(FeatureKind.ODF, rng.random((50, 3))),
            FeatureKind.MCQT: SyncFeature(FeatureKind.MCQT, rng.random((50, 304)))}
    a, b = model.likelihoods(sync), loaded.likelihoods(sync)
    assert set(a) == {"chroma", "lfs", "odf", "mcqt", "fused"}
    for k in a:
        assert len(a[k]) == 10
        np.testing.assert_array_equal(a[k].values, b[k].values)


def test_missing_bundle(tmp_path):
    with pytest.raises(FileNotFoundError):
        EnsembleModel.load(tmp_path)


def test_multilabel_inference_length(rng):
    spec = default_specs(reduced=True)[FeatureKind.LFS]
    from downbeat.nn import init_parameters
    p = init_parameters(spec, rng)
    lik = infer_likelihood(spec, p, SyncFeature(FeatureKind.LFS, rng.random((5 * 7, 10))))
    assert len(lik) == 7 and np.all((lik.values >= 0) & (lik.values <= 1))
