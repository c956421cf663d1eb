"""End-to-end calibration run on a synthetic corpus.

Generates songs, trains the reduced ensemble and transition matrix on the
first ``n_train``, scores the rest with the HMM and threshold decoders and
writes the bundle, score CSVs and a plain-text log. The log ends with SHA-256
digests of every bundle and score file so two runs can be compared byte for
byte.

Run with ``python -m downbeat.calibration OUT_DIR``.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import TrainConfig
from .evaluation import tatum_recall
from .harness import EvalMode, run_dataset_eval, write_eval_outputs
from .pipeline import EnsembleTrainConfig, analyze_clip, train_system
from .synth import CorpusSpec, corpus_recipes, generate_song

log = logging.getLogger(__name__)

HASHED_SUFFIXES = (".json", ".bin", ".csv")


@dataclass(frozen=True)
class CalibrationConfig:
    n_train: int = 40
    n_test: int = 10
    corpus_seed: int = 7
    train_seed: int = 0
    epochs: int = 30
    duration: float = 30.0


@dataclass
class CalibrationResult:
    out_dir: Path
    mean_f: dict[str, float]
    song_f: dict[str, list[float]]
    tatum_recall: float
    train_seconds: float
    analysis_seconds: float
    digests: dict[str, str] = field(default_factory=dict)


def file_digests(directory) -> dict[str, str]:
    """SHA-256 of every bundle and score file below ``directory``."""
    d = Path(directory)
    return {str(p.relative_to(d)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(d.rglob("*")) if p.suffix in HASHED_SUFFIXES}


def run_calibration(out_dir, config: CalibrationConfig = CalibrationConfig()) -> CalibrationResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = CorpusSpec(config.n_train + config.n_test, seed=config.corpus_seed,
                      duration=config.duration)
    t0 = time.perf_counter()
    songs = []
    for i, recipe in enumerate(corpus_recipes(spec)):
        clip, ann = generate_song(recipe)
        songs.append(analyze_clip(clip, f"song{i:03d}", ann))
    analysis_s = time.perf_counter() - t0
    train, test = songs[:config.n_train], songs[config.n_train:]

    t0 = time.perf_counter()
    cfg = EnsembleTrainConfig(train=TrainConfig(epochs=config.epochs, seed=config.train_seed))
    system = train_system(train, cfg)
    train_s = time.perf_counter() - t0
    system.save(out / "bundle")

    mode = EvalMode(decoders=("hmm", "threshold"))
    result = run_dataset_eval({"heldout": test}, mode, system=system)
    write_eval_outputs(result, out / "scores", mode)
    recall = float(np.mean([tatum_recall(s.grid.tatum_times, s.annotations.downbeat_times,
                                         s.duration) for s in songs]))
    digests = {f"bundle/{k}": v for k, v in file_digests(out / "bundle").items()}
    digests.update({f"scores/{k}": v for k, v in file_digests(out / "scores").items()
                    if k.endswith(".csv")})
    res = CalibrationResult(
        out, {d: r.mean_f() for d, r in result.reports.items()},
        {d: [s.f_measure for _, _, s in r.song_rows()] for d, r in result.reports.items()},
        recall, train_s, analysis_s, digests)
    write_log(out / "calibration.log", config, res, system.history)
    return res


def write_log(path, config: CalibrationConfig, res: CalibrationResult, history: dict) -> None:
    lines = [f"# calibration: {config}",
             f"analysis_seconds {res.analysis_seconds:.1f}",
             f"train_seconds {res.train_seconds:.1f}"]
    for name, h in history.items():
        curve = " ".join(f"{v:.6f}" for v in h["loss_curve"])
        lines.append(f"network {name} seed {h['seed']} windows {h['n_windows']} "
                     f"seconds {h['seconds']:.1f} loss {curve}")
    lines.append(f"mean_tatum_recall {res.tatum_recall:.3f}")
    for dec, f in res.mean_f.items():
        lines.append(f"heldout_mean_f {dec} {f:.4f}")
        lines.append(f"heldout_song_f {dec} " + " ".join(f"{v:.2f}" for v in res.song_f[dec]))
    for name, digest in res.digests.items():
        lines.append(f"sha256 {digest} {name}")
    Path(path).write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m downbeat.calibration")
    p.add_argument("out", type=Path)
    p.add_argument("--epochs", type=int, default=CalibrationConfig.epochs)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = run_calibration(args.out, CalibrationConfig(epochs=args.epochs))
    print((args.out / "calibration.log").read_text(), end="")
    return 0 if res.mean_f else 1


if __name__ == "__main__":
    raise SystemExit(main())
