"""Glue between audio, features, tatums, networks and the bar model."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip, load_audio
from .ensemble import (NETWORK_FOR, EnsembleModel, LikelihoodSeries, TrainConfig,
                       WindowSet, default_specs, train_network)
from .evaluation import AnnotationSet, SongScore, f_measure, parse_annotations
from .features import (FeatureKind, FeatureMatrix, clip_onset_function, compute_feature,
                       onset_function)
from .hmm import (BAR_LENGTHS, THRESHOLD, BarStateSpace, bars_to_states, build_state_space,
                  emissions_from_likelihood, load_transitions, save_transitions,
                  states_to_downbeats, threshold_baseline, train_transitions, viterbi)
from .sync import SyncFeature, downbeat_tatum_indices, quantize_to_grid
from .tatums import TatumGrid, snap_downbeats, substitute_annotated_grid, track_tatums

log = logging.getLogger(__name__)

TATUM_MODES = ("estimated", "annotated")
DECODE_MODES = ("hmm", "threshold")


@dataclass
class SongAnalysis:
    stem: str
    duration: float
    grid: TatumGrid
    sync: dict[FeatureKind, SyncFeature]
    annotations: AnnotationSet | None = None
    downbeat_tatums: np.ndarray | None = None


def song_grid(onsets: FeatureMatrix, duration: float, annotations: AnnotationSet | None,
              tatum_mode: str) -> TatumGrid:
    if tatum_mode == "estimated":
        return track_tatums(onsets, duration)
    if tatum_mode == "annotated":
        if annotations is None or annotations.beat_times is None:
            raise ValueError("annotated tatums need beat annotations")
        return substitute_annotated_grid(None, annotations.beat_times, factor=2)
    raise ValueError(f"tatum mode must be one of {TATUM_MODES}")


def analyze_clip(clip: AudioClip, stem: str = "", annotations: AnnotationSet | None = None,
                 kinds=tuple(FeatureKind), tatum_mode: str = "estimated",
                 snap: bool = False) -> SongAnalysis:
    """Features, tatum grid and synchronised features of one clip.

    ``snap`` moves the nearest tatum onto every annotated downbeat.
    """
    raw = onset_function(clip)
    grid = song_grid(raw, clip.duration, annotations, tatum_mode)
    odf = clip_onset_function(raw)
    if snap:
        if annotations is None:
            raise ValueError("snapping needs annotations")
        grid = snap_downbeats(grid, annotations.downbeat_times)
    sync = {}
    for kind in kinds:
        feat = odf if kind == FeatureKind.ODF else compute_feature(clip, kind)
        sync[FeatureKind(kind)] = quantize_to_grid(feat, grid)
    db = None
    if annotations is not None:
        db = downbeat_tatum_indices(grid.tatum_times, annotations.downbeat_times)
    return SongAnalysis(stem, clip.duration, grid, sync, annotations, db)


def analyze_file(audio_path, annotation_path=None, kinds=tuple(FeatureKind),
                 tatum_mode: str = "estimated", snap: bool = False) -> SongAnalysis:
    audio_path = Path(audio_path)
    ann = parse_annotations(annotation_path) if annotation_path else None
    return analyze_clip(load_audio(audio_path), audio_path.stem, ann, kinds, tatum_mode, snap)


def _analyze_job(args):
    return analyze_file(*args)


def analyze_many(jobs: list[tuple], n_jobs: int = 1) -> list[SongAnalysis]:
    """``jobs`` are ``analyze_file`` argument tuples; results keep input order."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_analyze_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_analyze_job, jobs))


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleTrainConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    reduced: bool = True
    kinds: tuple[FeatureKind, ...] = tuple(FeatureKind)
    bar_lengths: tuple[int, ...] = BAR_LENGTHS
    boost: float = 1.0
    hidden_units: int = 800
    dropout: float = 0.5


def _network_seed(base: int, kind: FeatureKind) -> int:
    return int(np.random.SeedSequence([base, list(FeatureKind).index(kind)]).generate_state(1)[0])


def training_windows(kind: FeatureKind, songs: list[SongAnalysis], rng) -> WindowSet:
    data = WindowSet.from_songs(kind, [s.sync[kind] for s in songs],
                                [s.downbeat_tatums for s in songs])
    if kind in (FeatureKind.MCQT, FeatureKind.CHROMA):
        data = data.balanced(rng)
    if kind == FeatureKind.CHROMA:
        data = data.with_chroma_shifts()
    return data


@dataclass
class TrainedSystem:
    model: EnsembleModel
    space: BarStateSpace
    transitions: np.ndarray
    history: dict

    def save(self, directory) -> Path:
        d = self.model.save(directory)
        save_transitions(d / "transitions", self.space, self.transitions)
        return d

    @classmethod
    def load(cls, directory) -> "TrainedSystem":
        d = Path(directory)
        model = EnsembleModel.load(d)
        space, a, _ = load_transitions(d / "transitions")
        return cls(model, space, a, model.metadata.get("history", {}))


def train_system(songs: list[SongAnalysis], config: EnsembleTrainConfig) -> TrainedSystem:
    """Train the networks of ``config.kinds`` and count bar transitions."""
    songs = [s for s in songs if s.downbeat_tatums is not None]
    if not songs:
        raise ValueError("no annotated songs to train on")
    specs = default_specs(config.reduced, config.dropout, config.hidden_units)
    trained_specs, params, history = {}, {}, {}
    for kind in config.kinds:
        seed = _network_seed(config.train.seed, kind)
        rng = np.random.default_rng(seed)
        data = training_windows(kind, songs, rng)
        cfg = TrainConfig(config.train.epochs, config.train.learning_rate, config.train.momentum,
                          config.train.batch_size, seed)
        result = train_network(specs[kind], data, cfg)
        trained_specs[kind], params[kind] = specs[kind], result.params
        history[NETWORK_FOR[kind]] = {"seed": seed, "n_windows": len(data),
                                      "loss_curve": result.loss_curve,
                                      "seconds": round(result.seconds, 3)}
        log.info("trained %s on %d windows in %.1f s", NETWORK_FOR[kind], len(data),
                 result.seconds)
    space = build_state_space(config.bar_lengths)
    a = train_transitions(space, [bars_to_states(space, s.downbeat_tatums) for s in songs],
                          boost=config.boost)
    meta = {"train_config": asdict(config.train), "reduced": config.reduced,
            "n_songs": len(songs), "song_stems": [s.stem for s in songs],
            "networks": {k: {"seed": v["seed"], "loss_curve": v["loss_curve"]}
                         for k, v in history.items()}}
    return TrainedSystem(EnsembleModel(trained_specs, params, meta), space, a, history)


# -- tracking ----------------------------------------------------------------

@dataclass
class TrackResult:
    downbeats: np.ndarray
    tatum_times: np.ndarray
    likelihoods: dict[str, LikelihoodSeries]
    states: np.ndarray | None = None


def decode(system: TrainedSystem, fused: LikelihoodSeries, tatum_times, mode: str = "hmm",
           threshold: float = THRESHOLD):
    if mode == "hmm":
        path = viterbi(system.space, system.transitions,
                       emissions_from_likelihood(system.space, fused.values))
        return states_to_downbeats(path, tatum_times), path.states
    if mode == "threshold":
        return np.asarray(tatum_times)[threshold_baseline(fused.values, threshold)], None
    raise ValueError(f"decode mode must be one of {DECODE_MODES}")


def track_song(system: TrainedSystem, song: SongAnalysis, mode: str = "hmm",
               threshold: float = THRESHOLD) -> TrackResult:
    lik = system.model.likelihoods(song.sync)
    db, states = decode(system, lik["fused"], song.grid.tatum_times, mode, threshold)
    return TrackResult(db, song.grid.tatum_times, lik, states)


def score_song(system: TrainedSystem, song: SongAnalysis, mode: str = "hmm",
               threshold: float = THRESHOLD) -> SongScore:
    if song.annotations is None:
        raise ValueError(f"{song.stem}: no annotations to score against")
    res = track_song(system, song, mode, threshold)
    return f_measure(res.downbeats, song.annotations.downbeat_times, song.duration)


