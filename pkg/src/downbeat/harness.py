"""Dataset-level evaluation: leave-one-dataset-out training and scoring.

A dataset is a directory of ``<stem>.wav`` files with ``<stem>.beats``
annotations next to them.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .ensemble import fuse_average
from .evaluation import ScoreReport, f_measure, tatum_recall
from .features import FeatureKind
from .hmm import BAR_LENGTHS, THRESHOLD, build_state_space, train_transitions, bars_to_states
from .pipeline import (EnsembleTrainConfig, SongAnalysis, TrainedSystem, analyze_many, decode,
                       train_system)

log = logging.getLogger(__name__)


def discover_dataset(directory) -> list[tuple[str, Path, Path]]:
    """``(stem, wav, annotation)`` triples sorted by stem. Stems present on
    one side only are logged and skipped."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {d}")
    wavs = {p.stem: p for p in d.glob("*.wav")}
    anns = {p.stem: p for p in d.glob("*.beats")}
    lonely = sorted(set(wavs) ^ set(anns))
    if lonely:
        log.warning("%s: skipping unpaired stems %s", d, ", ".join(lonely))
    return [(s, wavs[s], anns[s]) for s in sorted(set(wavs) & set(anns))]


def load_dataset(directory, tatum_mode: str = "estimated", snap: bool = False,
                 n_jobs: int = 1) -> list[SongAnalysis]:
    jobs = [(wav, ann, tuple(FeatureKind), tatum_mode, snap)
            for _, wav, ann in discover_dataset(directory)]
    return analyze_many(jobs, n_jobs)


@dataclass(frozen=True)
class EvalMode:
    """Ablation switches.

    ``decoders`` lists ``hmm`` and/or ``threshold``; ``tatums`` is
    ``estimated`` or ``annotated``; ``snap`` moves the nearest tatum onto
    each annotated downbeat; ``kinds`` selects the networks being fused.
    ``tatums`` and ``snap`` act when songs are loaded (:func:`load_dataset`).
    """

    decoders: tuple[str, ...] = ("hmm",)
    tatums: str = "estimated"
    snap: bool = False
    threshold: float = THRESHOLD
    bar_lengths: tuple[int, ...] = BAR_LENGTHS
    kinds: tuple[FeatureKind, ...] = tuple(FeatureKind)

    def __post_init__(self):
        bad = set(self.decoders) - {"hmm", "threshold"}
        if bad or not self.decoders:
            raise ValueError(f"unknown decoders {sorted(bad)}")
        if self.tatums not in ("estimated", "annotated"):
            raise ValueError("tatums must be 'estimated' or 'annotated'")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")


@dataclass
class EvalResult:
    reports: dict[str, ScoreReport]
    tatum_recall: dict[str, float] = field(default_factory=dict)
    rounds: list[dict] = field(default_factory=list)


def score_songs(system: TrainedSystem, songs: list[SongAnalysis], dataset: str, mode: EvalMode,
                result: EvalResult) -> None:
    """One inference pass per song, scored under every requested decoder."""
    for song in songs:
        lik = system.model.likelihoods(song.sync)
        fused = fuse_average([lik[k.value] for k in mode.kinds])
        for dec in mode.decoders:
            est, _ = decode(system, fused, song.grid.tatum_times, dec, mode.threshold)
            sc = f_measure(est, song.annotations.downbeat_times, song.duration)
            result.reports.setdefault(dec, ScoreReport()).add(dataset, song.stem, sc)
        result.tatum_recall[f"{dataset}/{song.stem}"] = tatum_recall(
            song.grid.tatum_times, song.annotations.downbeat_times, song.duration)


def _with_bar_lengths(system: TrainedSystem, train_songs, bar_lengths) -> TrainedSystem:
    if tuple(bar_lengths) == system.space.lengths:
        return system
    if not train_songs:
        raise ValueError("a different state space needs training songs to count transitions")
    space = build_state_space(bar_lengths)
    a = train_transitions(space, [bars_to_states(space, s.downbeat_tatums) for s in train_songs])
    return TrainedSystem(system.model, space, a, system.history)


def run_dataset_eval(datasets: dict[str, list[SongAnalysis]], mode: EvalMode = EvalMode(),
                     train_config: EnsembleTrainConfig | None = None,
                     system: TrainedSystem | None = None,
                     holdouts: list[str] | None = None) -> EvalResult:
    """Score every holdout dataset.

    With ``system`` given, that model scores the holdouts directly. Otherwise
    each holdout is scored by a model trained on all other datasets.
    """
    names = list(datasets)
    holdouts = holdouts or names
    missing = [h for h in holdouts if h not in datasets]
    if missing:
        raise ValueError(f"unknown holdout datasets: {missing}")
    result = EvalResult({})
    for held in holdouts:
        train_names = [n for n in names if n != held]
        train_songs = [s for n in train_names for s in datasets[n]]
        if system is None:
            if not train_songs:
                raise ValueError("leave-one-dataset-out needs at least two datasets")
            cfg = train_config or EnsembleTrainConfig()
            cfg = replace(cfg, bar_lengths=tuple(mode.bar_lengths))
            round_system = train_system(train_songs, cfg)
        else:
            round_system = _with_bar_lengths(system, train_songs, mode.bar_lengths)
        missing_kinds = [k for k in mode.kinds if k not in round_system.model.specs]
        if missing_kinds:
            raise ValueError(f"model lacks networks for {[k.value for k in missing_kinds]}")
        score_songs(round_system, datasets[held], held, mode, result)
        result.rounds.append({"holdout": held, "trained_on": train_names,
                              "retrained": system is None})
    return result


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_eval_outputs(result: EvalResult, out_dir, mode: EvalMode, extra: dict | None = None) -> Path:
    """Per-song and summary CSVs per decoder plus ``report.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode_dict = asdict(mode)
    mode_dict["kinds"] = [FeatureKind(k).value for k in mode.kinds]
    report = {"mode": mode_dict, "mode_fingerprint": fingerprint(mode_dict),
              "rounds": result.rounds, "decoders": {}, **(extra or {})}
    for dec, rep in result.reports.items():
        rep.write_song_csv(out / f"songs_{dec}.csv")
        rep.write_summary_csv(out / f"summary_{dec}.csv")
        report["decoders"][dec] = {"mean_f": round(rep.mean_f(), 6),
                                   "datasets": {k: {kk: round(vv, 6) for kk, vv in v.items()}
                                                for k, v in rep.dataset_means().items()}}
    if result.tatum_recall:
        report["mean_tatum_recall"] = round(float(np.mean(list(result.tatum_recall.values()))), 6)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return out
