"""Labelled synthetic songs for training and end-to-end checks.

A song is a kick on every downbeat, enveloped noise on every tatum with a
per-tatum accent profile, a sustained triad that changes every
``chord_period`` bars, and one melody note per beat. Every event starts on an
integer sample and the annotation times are those samples divided by the
sampling rate, so audio and labels agree exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav
from .evaluation import AnnotationSet, write_annotations

SAMPLE_RATE = 44100
TATUMS_PER_BEAT = 2
# major-key diatonic triads as semitone offsets from the tonic
_TRIADS = [(0, 4, 7), (2, 5, 9), (4, 7, 11), (5, 9, 12), (7, 11, 14), (9, 12, 16)]
_SCALE = (0, 2, 4, 5, 7, 9, 11)


@dataclass(frozen=True)
class SongRecipe:
    tempo: float
    meter: int
    duration: float
    seed: int
    tatums_per_beat: int = TATUMS_PER_BEAT
    chord_period: int = 1
    accents: tuple[float, ...] | None = None
    jitter: bool = False
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if not 60 <= self.tempo <= 200:
            raise ValueError("tempo must lie in [60, 200] BPM")
        if self.meter not in (2, 3, 4):
            raise ValueError("meter must be 2, 3 or 4 beats per bar")
        if self.duration < 20:
            raise ValueError("duration must be at least 20 s")
        if self.accents is not None and len(self.accents) != self.meter * self.tatums_per_beat:
            raise ValueError("one accent gain per tatum of the bar")


def _midi_hz(m):
    return 440.0 * 2.0 ** ((np.asarray(m) - 69) / 12.0)


def _default_accents(meter: int, tpb: int, rng: np.random.Generator) -> tuple[float, ...]:
    gains = []
    for beat in range(meter):
        for sub in range(tpb):
            if sub == 0:
                g = 1.0 if beat == 0 else rng.uniform(0.55, 0.8)
            else:
                g = rng.uniform(0.3, 0.5)
            gains.append(round(float(g), 4))
    return tuple(gains)


def _add(buf, start, sig):
    end = min(len(buf), start + len(sig))
    if end > start:
        buf[start:end] += sig[:end - start]


def _tone(freqs_hz, n, sr, attack=0.01, release=0.03, partials=(1.0, 0.5, 0.25)):
    t = np.arange(n) / sr
    out = np.zeros(n)
    for f in np.atleast_1d(freqs_hz):
        for k, a in enumerate(partials, start=1):
            if f * k < sr / 2:
                out += a * np.sin(2 * np.pi * f * k * t)
    env = np.ones(n)
    na, nr = min(n, int(attack * sr)), min(n, int(release * sr))
    env[:na] = np.linspace(0, 1, na, endpoint=False)
    if nr:
        env[n - nr:] *= np.linspace(1, 0, nr)
    return out * env


def generate_song(recipe: SongRecipe) -> tuple[AudioClip, AnnotationSet]:
    rng = np.random.default_rng(recipe.seed)
    sr = recipe.sample_rate
    n = int(round(recipe.duration * sr))
    beat = 60.0 / recipe.tempo
    tpb = recipe.tatums_per_beat
    accents = recipe.accents or _default_accents(recipe.meter, tpb, rng)

    n_beats = int(np.floor(recipe.duration / beat - 1e-9)) + 1
    nominal = np.arange(n_beats) * beat
    if recipe.jitter:
        nominal = nominal + rng.uniform(-0.01, 0.01, n_beats) * beat
        nominal[0] = max(nominal[0], 0.0)
    beat_samples = np.round(nominal * sr).astype(np.int64)
    beat_samples = beat_samples[beat_samples < n]
    beat_samples = np.unique(beat_samples)
    n_beats = len(beat_samples)
    bounds = np.append(beat_samples, n)

    x = np.zeros(n)
    kick_n = int(0.35 * sr)
    kt = np.arange(kick_n) / sr
    kick_freq = 45.0 + 65.0 * np.exp(-kt / 0.04)
    kick = 0.7 * np.sin(2 * np.pi * np.cumsum(kick_freq) / sr) * np.exp(-kt / 0.12)
    noise_n = int(0.12 * sr)
    nt = np.arange(noise_n) / sr

    tonic = 60 + int(rng.integers(-5, 6))
    downbeats = beat_samples[::recipe.meter]
    bars = len(downbeats)
    chords = [0]
    for _ in range(recipe.chord_period, bars, recipe.chord_period):
        chords.append(int(rng.choice([i for i in range(len(_TRIADS)) if i != chords[-1]])))

    for start in downbeats:
        _add(x, int(start), kick)
    for k in range(n_beats):
        seg_len = bounds[k + 1] - bounds[k]
        pos_in_bar = k % recipe.meter
        for sub in range(tpb):
            s = int(bounds[k] + round(sub * seg_len / tpb))
            gain = accents[pos_in_bar * tpb + sub]
            burst = np.diff(rng.standard_normal(noise_n + 1)) * np.exp(-nt / 0.03)
            _add(x, s, 0.12 * gain * burst)
    for c, ci in enumerate(chords):
        b0 = c * recipe.chord_period
        start = int(downbeats[b0])
        end = int(downbeats[b0 + recipe.chord_period]) if b0 + recipe.chord_period < bars else n
        notes = tonic + np.array(_TRIADS[ci])
        _add(x, start, 0.05 * _tone(_midi_hz(notes), end - start, sr))
    for k in range(n_beats):
        pc = _SCALE[int(rng.integers(len(_SCALE)))]
        note = tonic + 12 + pc + (12 if rng.random() < 0.3 else 0)
        length = int(0.9 * (bounds[k + 1] - bounds[k]))
        _add(x, int(bounds[k]), 0.08 * _tone(_midi_hz(note), length, sr, partials=(1.0, 0.3)))

    x *= 0.9 / max(np.max(np.abs(x)), 1e-12)
    ann = AnnotationSet(downbeats / sr, beat_samples / sr, "synthetic")
    return AudioClip(x, float(sr)), ann


def _allocate(n: int, mix: dict[int, float], rng: np.random.Generator) -> list[int]:
    """Meters for ``n`` songs in proportion to ``mix`` (largest remainder),
    shuffled."""
    meters = sorted(mix)
    w = np.array([mix[m] for m in meters], dtype=np.float64)
    w = w / w.sum()
    raw = w * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    out = [m for m, c in zip(meters, counts) for _ in range(c)]
    rng.shuffle(out)
    return out


DEFAULT_MIX = {2: 0.2, 3: 0.3, 4: 0.5}


@dataclass
class CorpusSpec:
    n_songs: int
    seed: int
    meter_mix: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    tempo_range: tuple[float, float] = (80.0, 160.0)
    duration: float = 30.0
    prefix: str = "song"
    jitter: bool = False


def corpus_recipes(spec: CorpusSpec) -> list[SongRecipe]:
    if spec.n_songs < 1:
        raise ValueError("n_songs must be >= 1")
    rng = np.random.default_rng(spec.seed)
    meters = _allocate(spec.n_songs, spec.meter_mix, rng)
    seeds = np.random.SeedSequence(spec.seed).generate_state(spec.n_songs)
    lo, hi = spec.tempo_range
    return [SongRecipe(tempo=round(float(rng.uniform(lo, hi)), 3), meter=int(m),
                       duration=spec.duration, seed=int(s), jitter=spec.jitter)
            for m, s in zip(meters, seeds)]


def generate_corpus(out_dir, spec: CorpusSpec) -> Path:
    """Write ``<stem>.wav`` / ``<stem>.beats`` pairs and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, recipe in enumerate(corpus_recipes(spec)):
        stem = f"{spec.prefix}{i:03d}"
        clip, ann = generate_song(recipe)
        write_wav(out / f"{stem}.wav", clip)
        write_annotations(out / f"{stem}.beats", ann)
        entries.append({"stem": stem, **asdict(recipe)})
    manifest = {"format": 1, "seed": spec.seed, "n_songs": spec.n_songs,
                "meter_mix": {str(k): v for k, v in spec.meter_mix.items()},
                "songs": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out
