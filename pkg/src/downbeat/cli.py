"""Command-line interface.

Subcommands: track, features, tatums, train, eval, synth. Every option can
also be given in a flat ``key = value`` file passed with ``--config``;
command-line values win. Exit codes: 0 success, 1 usage, 2 missing resource,
3 pipeline failure. Errors print one ``error: <kind>: <message>`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import __version__
from .audio import AudioFormatError, InputTooShortError, load_audio
from .ensemble import TrainConfig
from .evaluation import AnnotationError
from .features import FeatureKind, compute_feature, onset_function
from .hmm import BAR_LENGTHS, THRESHOLD
from .nn import TrainingDiverged, WeightFileError
from .synth import DEFAULT_MIX, CorpusSpec, generate_corpus
from .tatums import track_tatums

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_FAILURE = 0, 1, 2, 3

log = logging.getLogger("downbeat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _kind_list(text: str) -> tuple[FeatureKind, ...]:
    try:
        return tuple(FeatureKind(v.strip()) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"feature kinds are {[k.value for k in FeatureKind]}")


def _mix(text: str) -> dict[int, float]:
    try:
        pairs = [p.split(":") for p in text.split(",") if p.strip()]
        return {int(m): float(w) for m, w in pairs}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected meter:weight pairs, got {text!r}")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_train_options(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=30)
    g.add_argument("--lr", type=float, default=0.01)
    g.add_argument("--momentum", type=float, default=0.9)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--full", type=_bool, nargs="?", const=True, default=False,
                   help="full-width networks instead of the reduced preset")
    g.add_argument("--boost", type=float, default=1.0,
                   help="multiplier on end-of-bar to same-length bar-start transitions")
    g.add_argument("--bar-lengths", type=_int_list, default=BAR_LENGTHS,
                   help="allowed tatums per bar, comma separated")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="downbeat", description="Downbeat tracking from audio.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="key = value file with option defaults")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("track", help="downbeat times of one audio file")
    p.add_argument("audio", type=Path)
    p.add_argument("--model", type=Path, required=False, help="model bundle directory")
    p.add_argument("--mode", choices=("hmm", "threshold"), default="hmm")
    p.add_argument("--threshold", "--t", dest="threshold", type=float, default=THRESHOLD)
    p.add_argument("--emit", choices=("downbeats", "likelihoods"), default="downbeats")
    p.add_argument("--out", type=Path, help="write here instead of stdout")

    p = sub.add_parser("features", help="one feature matrix as CSV")
    p.add_argument("audio", type=Path)
    p.add_argument("--kind", choices=[k.value for k in FeatureKind], required=False)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("tatums", help="estimated tatum times")
    p.add_argument("audio", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("train", help="train a model bundle")
    p.add_argument("datasets", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=False)
    p.add_argument("--holdout", action="append", default=[], help="dataset name to leave out")
    p.add_argument("--jobs", type=int, default=1)
    _add_train_options(p)

    p = sub.add_parser("eval", help="score datasets, leave-one-dataset-out by default")
    p.add_argument("datasets", type=Path, nargs="+")
    p.add_argument("--model", type=Path, help="score with this bundle instead of retraining")
    p.add_argument("--holdout", action="append", default=[], help="only score these datasets")
    p.add_argument("--mode", default="hmm",
                   help="comma list of: hmm, threshold, annotated, snap")
    p.add_argument("--threshold", "--t", dest="threshold", type=float, default=THRESHOLD)
    p.add_argument("--kinds", type=_kind_list, default=tuple(FeatureKind),
                   help="networks to fuse, comma separated feature kinds")
    p.add_argument("--out", type=Path, required=False)
    p.add_argument("--jobs", type=int, default=1)
    _add_train_options(p)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=False)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--mix", type=_mix, default=dict(DEFAULT_MIX), help="e.g. 2:0.2,3:0.3,4:0.5")
    p.add_argument("--tempo-min", type=float, default=80.0)
    p.add_argument("--tempo-max", type=float, default=160.0)
    p.add_argument("--jitter", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--prefix", default="song")
    return parser


def read_config(path: Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(subparser: argparse.ArgumentParser, values: dict[str, str], path) -> None:
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{path}: unknown option {key!r} for this command")
        if action.nargs in ("+", "*"):
            conv = [action.type(v) if action.type else v for v in text.split()]
        elif isinstance(action, argparse._AppendAction):
            conv = [v.strip() for v in text.split(",") if v.strip()]
        else:
            try:
                conv = action.type(text) if action.type else text
            except (argparse.ArgumentTypeError, ValueError) as err:
                raise UsageError(f"{path}: bad value for {key}: {err}")
            if action.choices and conv not in action.choices:
                raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
        defaults[key] = conv
        action.required = False
        if action.option_strings == [] and action.nargs in ("+", "*"):
            action.nargs = "*"
    subparser.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("downbeat: a command is required (track, features, tatums, train, "
                         "eval, synth)")
    if args.config is not None:
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, values, args.config)
        args = parser.parse_args(argv)
    for name in ("model", "out", "kind"):
        needed = {"track": ("model",), "features": ("kind",), "train": ("out",),
                  "eval": ("out",), "synth": ("out",)}.get(args.command, ())
        if name in needed and getattr(args, name, None) is None:
            raise UsageError(f"downbeat {args.command}: --{name} is required")
    if args.command in ("train", "eval") and not args.datasets:
        raise UsageError(f"downbeat {args.command}: at least one dataset directory is required")
    return args


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _times_text(times) -> str:
    return "".join(f"{t:.6f}\n" for t in times)


def _require_file(path: Path, what: str) -> None:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")


def _train_config(args):
    from .pipeline import EnsembleTrainConfig
    return EnsembleTrainConfig(
        train=TrainConfig(args.epochs, args.lr, args.momentum, args.batch_size, args.seed),
        reduced=not args.full, bar_lengths=tuple(args.bar_lengths), boost=args.boost)


def cmd_track(args) -> int:
    from .pipeline import TrainedSystem, analyze_clip, track_song
    _require_file(args.model / "ensemble.json", "model bundle")
    _require_file(args.audio, "audio file")
    system = TrainedSystem.load(args.model)
    song = analyze_clip(load_audio(args.audio), args.audio.stem)
    res = track_song(system, song, args.mode, args.threshold)
    if args.emit == "likelihoods":
        doc = {"tatum_times": [round(float(t), 6) for t in res.tatum_times],
               "downbeats": [round(float(t), 6) for t in res.downbeats],
               "likelihoods": {k: [round(float(v), 6) for v in s.values]
                               for k, s in res.likelihoods.items()}}
        _emit(json.dumps(doc, indent=1) + "\n", args.out)
    else:
        _emit(_times_text(res.downbeats), args.out)
    return EXIT_OK


def cmd_features(args) -> int:
    _require_file(args.audio, "audio file")
    feat = compute_feature(load_audio(args.audio), FeatureKind(args.kind))
    header = "time," + ",".join(f"bin_{i}" for i in range(feat.n_bins))
    rows = [header] + [f"{t:.6f}," + ",".join(f"{v:.6f}" for v in row)
                       for t, row in zip(feat.frame_times, feat.values)]
    _emit("\n".join(rows) + "\n", args.out)
    return EXIT_OK


def cmd_tatums(args) -> int:
    _require_file(args.audio, "audio file")
    clip = load_audio(args.audio)
    grid = track_tatums(onset_function(clip), clip.duration)
    _emit(_times_text(grid.tatum_times), args.out)
    return EXIT_OK


def _load_datasets(args, tatum_mode="estimated", snap=False):
    from .harness import load_dataset
    datasets = {}
    for d in args.datasets:
        _require_file(d, "dataset directory")
        name = d.resolve().name
        if name in datasets:
            raise UsageError(f"two datasets are named {name!r}")
        datasets[name] = load_dataset(d, tatum_mode, snap, args.jobs)
        if not datasets[name]:
            raise ValueError(f"dataset {d} has no paired audio and annotations")
    return datasets


def write_loss_csv(path: Path, history: dict) -> None:
    lines = ["network,epoch,loss"]
    for name, h in history.items():
        lines += [f"{name},{i + 1},{v:.6f}" for i, v in enumerate(h["loss_curve"])]
    path.write_text("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    from .pipeline import train_system
    datasets = _load_datasets(args)
    unknown = [h for h in args.holdout if h not in datasets]
    if unknown:
        raise UsageError(f"unknown holdout datasets {unknown}; have {sorted(datasets)}")
    songs = [s for name, ds in datasets.items() if name not in args.holdout for s in ds]
    if not songs:
        raise ValueError("no training songs left after holdout")
    system = train_system(songs, _train_config(args))
    out = system.save(args.out)
    write_loss_csv(out / "training_log.csv", system.history)
    log.info("bundle written to %s", out)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness import EvalMode, run_dataset_eval, write_eval_outputs
    from .pipeline import TrainedSystem
    flags = {f.strip() for f in args.mode.split(",") if f.strip()}
    bad = flags - {"hmm", "threshold", "annotated", "snap"}
    if bad:
        raise UsageError(f"unknown eval mode flags {sorted(bad)}")
    decoders = tuple(d for d in ("hmm", "threshold") if d in flags) or ("hmm",)
    mode = EvalMode(decoders, "annotated" if "annotated" in flags else "estimated",
                    "snap" in flags, args.threshold, tuple(args.bar_lengths), tuple(args.kinds))
    system = None
    if args.model is not None:
        _require_file(args.model / "ensemble.json", "model bundle")
        system = TrainedSystem.load(args.model)
    datasets = _load_datasets(args, mode.tatums, mode.snap)
    result = run_dataset_eval(datasets, mode, _train_config(args), system,
                              args.holdout or None)
    write_eval_outputs(result, args.out, mode)
    for dec, rep in result.reports.items():
        print(f"{dec}: mean F {rep.mean_f():.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = CorpusSpec(args.n, args.seed, args.mix, (args.tempo_min, args.tempo_max),
                      args.duration, args.prefix, args.jitter)
    out = generate_corpus(args.out, spec)
    print(out)
    return EXIT_OK


COMMANDS = {"track": cmd_track, "features": cmd_features, "tatums": cmd_tatums,
            "train": cmd_train, "eval": cmd_eval, "synth": cmd_synth}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(f"error: {kind}: {' '.join(str(message).split())}\n")
    return code


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as err:
        return _fail("usage", err, EXIT_USAGE)
    except FileNotFoundError as err:
        return _fail("missing", err, EXIT_MISSING)
    except SystemExit as err:  # --help and --version
        return int(err.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        return _fail("usage", err, EXIT_USAGE)
    except FileNotFoundError as err:
        return _fail("missing", err, EXIT_MISSING)
    except (AudioFormatError, InputTooShortError, AnnotationError, WeightFileError,
            TrainingDiverged, ValueError, RuntimeError) as err:
        return _fail("pipeline", f"{type(err).__name__}: {err}", EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
