"""Annotations and downbeat scores.

F-measure with a +-70 ms window, one-to-one greedy matching, and the first
5 s and last 3 s of every clip ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TOLERANCE = 0.07
SKIP_START = 5.0
SKIP_END = 3.0
_EPS = 1e-9


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationSet:
    downbeat_times: np.ndarray
    beat_times: np.ndarray | None = None
    source: str = ""

    def __post_init__(self):
        for name in ("downbeat_times", "beat_times"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if np.any(v < 0) or np.any(np.diff(v) <= 0):
                raise AnnotationError(f"{name} must be nonnegative and strictly increasing")
            object.__setattr__(self, name, v)


def parse_annotations(path, source: str = "") -> AnnotationSet:
    """Read ``time`` or ``time index`` lines; index 1 marks a downbeat."""
    path = Path(path)
    times, idx = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if len(parts) == 1:
                times.append(float(parts[0]))
                idx.append(None)
            elif len(parts) == 2:
                times.append(float(parts[0]))
                idx.append(int(float(parts[1])))
            else:
                raise ValueError("expected one or two columns")
        except ValueError as err:
            raise AnnotationError(f"{path}:{lineno}: cannot parse {line!r} ({err})") from None
        if len(times) > 1 and times[-1] <= times[-2]:
            raise AnnotationError(f"{path}:{lineno}: times not strictly increasing")
    has_index = [i is not None for i in idx]
    if any(has_index) and not all(has_index):
        raise AnnotationError(f"{path}: mixed one- and two-column lines")
    t = np.array(times)
    if idx and idx[0] is not None:
        db = t[np.array(idx) == 1]
        return AnnotationSet(db, t, source or path.parent.name)
    return AnnotationSet(t, None, source or path.parent.name)


def write_annotations(path, ann: AnnotationSet) -> None:
    """Two-column ``time index`` file when beats are known, else one column."""
    lines = []
    if ann.beat_times is not None:
        db = set(np.round(ann.downbeat_times, 9))
        pos = 0
        for t in ann.beat_times:
            pos = 1 if round(t, 9) in db else pos + 1
            lines.append(f"{t:.6f} {pos}")
    else:
        lines = [f"{t:.6f}" for t in ann.downbeat_times]
    Path(path).write_text("\n".join(lines) + "\n")


def trim_edges(times, duration: float, skip_start: float = SKIP_START,
               skip_end: float = SKIP_END) -> np.ndarray:
    """Drop events in ``[0, skip_start)`` and ``(duration - skip_end, duration]``."""
    t = np.asarray(times, dtype=np.float64)
    return t[(t >= skip_start) & (t <= duration - skip_end)]


def count_matches(estimated, annotated, tolerance: float = TOLERANCE) -> int:
    """Greedy one-to-one matching: each estimate, in time order, takes the
    earliest unmatched annotation within the window."""
    est = np.sort(np.asarray(estimated, dtype=np.float64))
    ann = np.sort(np.asarray(annotated, dtype=np.float64))
    j, hits = 0, 0
    for e in est:
        while j < len(ann) and ann[j] < e - tolerance - _EPS:
            j += 1
        if j < len(ann) and abs(ann[j] - e) <= tolerance + _EPS:
            hits += 1
            j += 1
    return hits


@dataclass(frozen=True)
class SongScore:
    precision: float
    recall: float
    f_measure: float
    n_estimated: int
    n_annotated: int
    n_matched: int


def f_measure(estimated, annotated, clip_duration: float,
              tolerance: float = TOLERANCE) -> SongScore:
    """Precision, recall and F in percent after edge trimming."""
    est = trim_edges(estimated, clip_duration)
    ann = trim_edges(annotated, clip_duration)
    if len(est) == 0 and len(ann) == 0:
        return SongScore(100.0, 100.0, 100.0, 0, 0, 0)
    hits = count_matches(est, ann, tolerance)
    p = hits / len(est) if len(est) else 0.0
    r = hits / len(ann) if len(ann) else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return SongScore(100 * p, 100 * r, 100 * f, len(est), len(ann), hits)


def tatum_recall(tatum_times, annotated_downbeats, clip_duration: float,
                 tolerance: float = TOLERANCE) -> float:
    """Percent of edge-trimmed downbeats with a tatum within the window."""
    ann = trim_edges(annotated_downbeats, clip_duration)
    if len(ann) == 0:
        return 100.0
    tat = np.sort(np.asarray(tatum_times, dtype=np.float64))
    if len(tat) == 0:
        return 0.0
    pos = np.clip(np.searchsorted(tat, ann), 1, len(tat)) - 1
    near = np.minimum(np.abs(tat[pos] - ann),
                      np.abs(tat[np.minimum(pos + 1, len(tat) - 1)] - ann))
    return 100.0 * float(np.mean(near <= tolerance + _EPS))


def metrical_variants(estimated) -> dict[str, np.ndarray]:
    est = np.sort(np.asarray(estimated, dtype=np.float64))
    mids = 0.5 * (est[:-1] + est[1:])
    return {
        "identity": est,
        "half_even": est[0::2],
        "half_odd": est[1::2],
        "double": np.sort(np.concatenate([est, mids])),
    }


def f_measure_metrical_variants(estimated, annotated, clip_duration: float,
                                tolerance: float = TOLERANCE) -> SongScore:
    """Best score over the estimate, its half-rate and double-rate versions."""
    scores = [f_measure(v, annotated, clip_duration, tolerance)
              for v in metrical_variants(estimated).values()]
    return max(scores, key=lambda s: s.f_measure)


@dataclass
class ScoreReport:
    """Per-song scores grouped by dataset."""

    songs: dict[str, list[tuple[str, SongScore]]] = field(default_factory=dict)

    def add(self, dataset: str, stem: str, score: SongScore) -> None:
        self.songs.setdefault(dataset, []).append((stem, score))

    def dataset_means(self) -> dict[str, dict[str, float]]:
        out = {}
        for name, rows in self.songs.items():
            f = np.array([s.f_measure for _, s in rows])
            out[name] = {
                "precision": float(np.mean([s.precision for _, s in rows])),
                "recall": float(np.mean([s.recall for _, s in rows])),
                "f_measure": float(f.mean()),
                "f_std": float(f.std()),
                "n_songs": len(rows),
            }
        return out

    def mean_f(self) -> float:
        f = [s.f_measure for rows in self.songs.values() for _, s in rows]
        return float(np.mean(f)) if f else 0.0

    def song_rows(self):
        for name, rows in self.songs.items():
            for stem, s in rows:
                yield name, stem, s

    def write_song_csv(self, path) -> None:
        lines = ["dataset,stem,precision,recall,f_measure"]
        for name, stem, s in self.song_rows():
            lines.append(f"{name},{stem},{s.precision:.6f},{s.recall:.6f},{s.f_measure:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_summary_csv(self, path) -> None:
        lines = ["dataset,n_songs,precision,recall,f_measure,f_std"]
        for name, m in self.dataset_means().items():
            lines.append(f"{name},{m['n_songs']},{m['precision']:.6f},{m['recall']:.6f},"
                         f"{m['f_measure']:.6f},{m['f_std']:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")
