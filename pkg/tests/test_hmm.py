import numpy as np
import pytest

from downbeat import kernels
from downbeat.hmm import (BAR_LENGTHS, FLOOR, boost_bar_ends, bars_to_states,
                          brute_force_decode, build_state_space, emissions_from_likelihood,
                          load_transitions, path_log_prob, prior_row, save_transitions,
                          snap_bar_length, states_to_downbeats, threshold_baseline,
                          train_transitions, viterbi)

from oracles import random_hmm_case


def test_default_state_space():
    space = build_state_space()
    assert len(space) == sum(BAR_LENGTHS) == 80
    assert len(space.h1) == 10
    assert space.states[:4] == ((3, 1), (3, 2), (3, 3), (4, 1))
    assert space.successor(space.index(3, 3)) == space.index(3, 1)


def test_state_space_validation():
    with pytest.raises(ValueError):
        build_state_space([])
    with pytest.raises(ValueError):
        build_state_space([3, 3])
    with pytest.raises(ValueError):
        build_state_space([1, 4])


def test_snap_bar_length():
    assert snap_bar_length(11, BAR_LENGTHS) == 10
    assert snap_bar_length(14, BAR_LENGTHS) == 12
    assert snap_bar_length(30, BAR_LENGTHS) == 16
    assert snap_bar_length(4, BAR_LENGTHS) == 4


def test_bars_to_states():
    space = build_state_space([3, 4])
    np.testing.assert_array_equal(bars_to_states(space, [0, 3, 7]), [0, 1, 2, 3, 4, 5, 6])


def test_transitions_are_stochastic_and_floored():
    space = build_state_space()
    a = train_transitions(space, [bars_to_states(space, [0, 8, 16, 24, 30])])
    np.testing.assert_allclose(a.sum(axis=1), 1.0)
    assert a.min() >= FLOOR / (1 + len(space) * FLOOR) - 1e-12
    i = space.index(8, 3)
    assert a[i].argmax() == space.successor(i)


def test_prior_row_for_unvisited_state():
    space = build_state_space()
    row = prior_row(space, space.index(5, 5))
    assert row.argmax() == space.index(5, 1)
    assert row.sum() == pytest.approx(1.0)


def test_boost_bar_ends():
    space = build_state_space([3, 4])
    a = train_transitions(space, [])
    b = boost_bar_ends(space, a, 2.0)
    np.testing.assert_allclose(b.sum(axis=1), 1.0)
    end = space.index(4, 4)
    assert b[end, space.index(4, 1)] > a[end, space.index(4, 1)]
    with pytest.raises(ValueError):
        boost_bar_ends(space, a, 0.0)


def test_emissions():
    space = build_state_space([3, 4])
    e = emissions_from_likelihood(space, [0.9])
    np.testing.assert_allclose(e[0], [0.9, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        emissions_from_likelihood(space, [1.2])


@pytest.mark.parametrize("lengths", [(3, 4), (2, 3)])
def test_viterbi_matches_brute_force(rng, lengths):
    space = build_state_space(lengths)
    for case in range(40):
        t_len = int(rng.integers(1, 8))
        a, e = random_hmm_case(rng, space, t_len, quantize=case % 2 == 1)
        fast, slow = viterbi(space, a, e), brute_force_decode(space, a, e)
        np.testing.assert_array_equal(fast.states, slow.states)
        assert fast.log_prob == slow.log_prob == path_log_prob(space, a, e, fast.states)


def test_backends_agree_on_viterbi(rng):
    space = build_state_space()
    a, e = random_hmm_case(rng, space, 60)
    log_pi = np.full(len(space), -np.log(len(space)))
    args = (log_pi, np.log(a), np.log(np.maximum(e, 1e-300)))
    py_path, py_best = kernels.python_backend().viterbi_decode(*args)
    path, best = kernels.viterbi_decode(*args)
    np.testing.assert_array_equal(np.asarray(py_path), np.asarray(path))
    assert py_best == best


def test_clear_likelihood_gives_periodic_bars():
    space = build_state_space()
    a = train_transitions(space, [bars_to_states(space, np.arange(0, 200, 8))])
    d = np.where(np.arange(64) % 8 == 0, 0.95, 0.05)
    path = viterbi(space, a, emissions_from_likelihood(space, d))
    np.testing.assert_array_equal(path.downbeat_tatums, np.arange(0, 64, 8))
    np.testing.assert_allclose(states_to_downbeats(path, np.arange(64) * 0.25),
                               np.arange(0, 64, 8) * 0.25)


def test_brute_force_limit():
    space = build_state_space()
    with pytest.raises(ValueError):
        brute_force_decode(space, train_transitions(space, []), np.full((10, 80), 0.5))


def test_threshold_baseline():
    np.testing.assert_array_equal(threshold_baseline([0.1, 0.9, 0.88, 0.95]), [1, 3])
    with pytest.raises(ValueError):
        threshold_baseline([0.5], 1.5)


def test_transition_file_roundtrip(tmp_path):
    space = build_state_space([3, 4, 6])
    a = train_transitions(space, [bars_to_states(space, [0, 4, 8, 11])])
    save_transitions(tmp_path / "t", space, a)
    space2, a2, meta = load_transitions(tmp_path / "t")
    assert space2.lengths == (3, 4, 6) and meta["bar_lengths"] == [3, 4, 6]
    np.testing.assert_array_equal(a, a2)
