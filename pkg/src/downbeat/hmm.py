"""Bar-position hidden Markov model over tatums.

Each state is a (bar length, position) pair; the position-1 states form the
downbeat set H1. Transition probabilities are counted from annotated bars,
floored and renormalised; emissions are the fused downbeat likelihood for H1
states and its complement elsewhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .nn.weights import load_matrix, save_matrix

log = logging.getLogger(__name__)

BAR_LENGTHS = (3, 4, 5, 6, 7, 8, 9, 10, 12, 16)
FLOOR = 0.02
LOG_FLOOR = 1e-300
BRUTE_FORCE_LIMIT = 10 ** 7
# prior for rows without any observed transition
PRIOR_ADVANCE = 0.9
PRIOR_H1 = 0.09
THRESHOLD = 0.88


@dataclass(frozen=True)
class BarStateSpace:
    lengths: tuple[int, ...]
    states: tuple[tuple[int, int], ...]  # (bar length, position from 1)
    h1: np.ndarray

    def __len__(self):
        return len(self.states)

    def index(self, length: int, position: int) -> int:
        return self.states.index((length, position))

    def successor(self, i: int) -> int:
        """State reached by advancing one tatum in the same bar length."""
        length, pos = self.states[i]
        return self.index(length, pos + 1 if pos < length else 1)

    def is_h1(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        mask[self.h1] = True
        return mask


def build_state_space(lengths=BAR_LENGTHS) -> BarStateSpace:
    """States enumerated length-major (ascending), position-minor."""
    lengths = tuple(sorted(int(n) for n in lengths))
    if not lengths:
        raise ValueError("need at least one bar length")
    if len(set(lengths)) != len(lengths) or min(lengths) < 2:
        raise ValueError("bar lengths must be distinct and >= 2")
    states = tuple((n, p) for n in lengths for p in range(1, n + 1))
    h1 = np.array([i for i, (_, p) in enumerate(states) if p == 1], dtype=np.int64)
    return BarStateSpace(lengths, states, h1)


def snap_bar_length(n_tatums: int, lengths) -> int:
    """Nearest allowed bar length; equidistant candidates go to the shorter."""
    lengths = sorted(lengths)
    return min(lengths, key=lambda l: (abs(l - n_tatums), l))


def bars_to_states(space: BarStateSpace, downbeat_tatums) -> np.ndarray:
    """State sequence for the bars between consecutive annotated downbeats,
    each bar length snapped onto the allowed set."""
    db = np.asarray(sorted(downbeat_tatums), dtype=np.int64)
    seq = []
    for n in np.diff(db):
        length = snap_bar_length(int(n), space.lengths)
        start = space.index(length, 1)
        seq.extend(range(start, start + length))
    return np.array(seq, dtype=np.int64)


def _floor_renormalize(row: np.ndarray, floor: float) -> np.ndarray:
    row = np.maximum(row, floor)
    return row / row.sum()


def prior_row(space: BarStateSpace, i: int) -> np.ndarray:
    n = len(space)
    row = np.full(n, (1.0 - PRIOR_ADVANCE - PRIOR_H1) / n)
    row[space.h1] += PRIOR_H1 / len(space.h1)
    row[space.successor(i)] += PRIOR_ADVANCE
    return row


def train_transitions(space: BarStateSpace, sequences, floor: float = FLOOR,
                      boost: float = 1.0) -> np.ndarray:
    """Counted transitions ``max(n_ij / N_i, floor)``, rows renormalised.

    Rows never visited use :func:`prior_row` before the same floor rule.
    ``boost`` multiplies every end-of-bar to same-length H1 entry before
    renormalising.
    """
    n = len(space)
    counts = np.zeros((n, n))
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if len(seq) and (seq.min() < 0 or seq.max() >= n):
            raise ValueError("state index out of range")
        np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
    a = np.empty((n, n))
    totals = counts.sum(axis=1)
    for i in range(n):
        row = counts[i] / totals[i] if totals[i] > 0 else prior_row(space, i)
        a[i] = _floor_renormalize(row, floor)
    if boost != 1.0:
        a = boost_bar_ends(space, a, boost)
    return a


def boost_bar_ends(space: BarStateSpace, a: np.ndarray, factor: float) -> np.ndarray:
    if factor <= 0:
        raise ValueError("boost factor must be positive")
    a = a.copy()
    for length in space.lengths:
        end, first = space.index(length, length), space.index(length, 1)
        a[end, first] *= factor
        a[end] /= a[end].sum()
    return a


def emissions_from_likelihood(space: BarStateSpace, d) -> np.ndarray:
    """T x S emission matrix: ``d`` on H1 states, ``1 - d`` elsewhere."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0) or np.any(d > 1):
        raise ValueError("likelihood values must lie in [0, 1]")
    e = np.repeat((1.0 - d)[:, None], len(space), axis=1)
    e[:, space.h1] = d[:, None]
    return e


@dataclass(frozen=True)
class DecodedPath:
    states: np.ndarray
    downbeat_tatums: np.ndarray
    log_prob: float


def _logs(space, a, emissions):
    n = len(space)
    a = np.asarray(a, dtype=np.float64)
    e = np.asarray(emissions, dtype=np.float64)
    if a.shape != (n, n) or e.ndim != 2 or e.shape[1] != n:
        raise ValueError("transition or emission shape does not match the state space")
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
    log_pi = np.full(n, np.log(1.0 / n))
    log_e = np.log(np.maximum(e, LOG_FLOOR))
    return log_pi, log_a, log_e


def _decoded(space, path, log_prob):
    path = np.asarray(path, dtype=np.int64)
    return DecodedPath(path, np.flatnonzero(space.is_h1()[path]), float(log_prob))


def viterbi(space: BarStateSpace, a: np.ndarray, emissions: np.ndarray) -> DecodedPath:
    """Most probable state path under a uniform initial distribution.

    Ties go to the lowest state index.
    """
    if len(emissions) == 0:
        raise ValueError("need at least one tatum")
    log_pi, log_a, log_e = _logs(space, a, emissions)
    path, best = kernels.viterbi_decode(log_pi, log_a, log_e)
    if len(path) > 1 and not np.all(np.asarray(a)[path[:-1], path[1:]] > 0):
        raise AssertionError("decoded path uses a zero-probability transition")
    return _decoded(space, path, best)


def path_log_prob(space: BarStateSpace, a, emissions, path) -> float:
    """Log probability of an explicit path, accumulated as the decoder does."""
    log_pi, log_a, log_e = _logs(space, a, emissions)
    s = log_pi[path[0]] + log_e[0, path[0]]
    for t in range(1, len(path)):
        s = (s + log_a[path[t - 1], path[t]]) + log_e[t, path[t]]
    return float(s)


def brute_force_decode(space: BarStateSpace, a: np.ndarray, emissions: np.ndarray) -> DecodedPath:
    """Exhaustive search over all ``S**T`` state sequences.

    Among equally probable sequences the one whose reversed state tuple is
    smallest wins, which is the rule the Viterbi backtrace applies.
    """
    log_pi, log_a, log_e = _logs(space, a, emissions)
    t_len, n = log_e.shape
    if t_len == 0:
        raise ValueError("need at least one tatum")
    if float(n) ** t_len > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{n}^{t_len} sequences exceed the brute-force limit")
    score = log_pi + log_e[0]
    for t in range(1, t_len):
        # rows: prefixes in C order, last axis: the new state
        score = ((score.reshape(-1, n)[:, :, None] + log_a[None, :, :])
                 + log_e[t][None, None, :]).ravel()
    best = score.max()
    winners = np.flatnonzero(score == best)
    seqs = np.stack(np.unravel_index(winners, (n,) * t_len), axis=1)
    pick = min(range(len(seqs)), key=lambda r: tuple(seqs[r][::-1]))
    return _decoded(space, seqs[pick], best)


def states_to_downbeats(path: DecodedPath, tatum_times) -> np.ndarray:
    t = np.asarray(tatum_times, dtype=np.float64)
    if len(t) != len(path.states):
        raise ValueError("path and grid lengths differ")
    if len(path.downbeat_tatums) == 0:
        log.warning("decoded path never enters a bar start")
    return t[path.downbeat_tatums]


def threshold_baseline(d, threshold: float = THRESHOLD) -> np.ndarray:
    """Tatum indices whose likelihood exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return np.flatnonzero(np.asarray(d, dtype=np.float64) > threshold)


def save_transitions(path, space: BarStateSpace, a: np.ndarray, metadata: dict | None = None) -> Path:
    meta = {"bar_lengths": list(space.lengths), **(metadata or {})}
    return save_matrix(path, a, meta)


def load_transitions(path) -> tuple[BarStateSpace, np.ndarray, dict]:
    a, meta = load_matrix(path)
    space = build_state_space(meta["bar_lengths"])
    if a.shape != (len(space), len(space)):
        raise ValueError("transition matrix does not match its state space")
    return space, a, meta
