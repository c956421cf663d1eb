"""The four feature-adapted networks, their training loop, inference and fusion.

=========  =======  ==========  ===================
network    feature  window      head
=========  =======  ==========  ===================
MCNN       mcqt     17 tatums   2-way softmax, log loss
RCNN       odf      17 tatums   17 sigmoids, squared distance
HCNN       chroma   9 tatums    2-way softmax, log loss
BCNN       lfs      17 tatums   17 sigmoids, squared distance
=========  =======  ==========  ===================

Softmax heads put the downbeat probability at output index 1.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureKind
from .nn import (LayerSpec, NetworkSpec, Parameters, TrainingDiverged, backward, dropout,
                 forward, init_parameters, load_weights, loss_value, maxpool, relu,
                 save_weights, sgd_step, sigmoid, softmax)
from .sync import (NetworkInput, SyncFeature, mirror_index, padded_blocks,
                   window_batch)

log = logging.getLogger(__name__)

DOWNBEAT_CLASS = 1
NETWORK_FOR = {FeatureKind.MCQT: "mcnn", FeatureKind.ODF: "rcnn",
               FeatureKind.CHROMA: "hcnn", FeatureKind.LFS: "bcnn"}
KIND_FOR = {v: k for k, v in NETWORK_FOR.items()}
WINDOW_TATUMS = {FeatureKind.MCQT: 17, FeatureKind.ODF: 17, FeatureKind.CHROMA: 9,
                 FeatureKind.LFS: 17}
BUNDLE_VERSION = 1


def _spec(name, shape, rows, head_units, loss, width, hidden, dropout_rate):
    """Four-layer spec; ``rows`` gives (t1, v1, pool) for the first three layers."""
    maps = [1, max(1, 30 // width), max(1, 60 // width), max(1, hidden // width)]
    layers = []
    for i, (t1, v1, pool) in enumerate(rows):
        chain = [relu()]
        if pool is not None:
            chain.append(maxpool(*pool))
        if i == 2 and dropout_rate > 0:
            chain.append(dropout(dropout_rate))
        layers.append(LayerSpec((t1, v1, maps[i], maps[i + 1]), tuple(chain)))
    head = softmax() if loss == "log" else sigmoid()
    layers.append(LayerSpec((1, 1, maps[3], head_units), (head,)))
    return NetworkSpec(name, shape, tuple(layers), loss)


def default_specs(reduced: bool = False, dropout_rate: float = 0.5,
                  hidden_units: int = 800) -> dict[FeatureKind, NetworkSpec]:
    """Architectures of the four networks. ``reduced`` divides every filter
    count by ten for desk-scale training."""
    w = 10 if reduced else 1
    return {
        FeatureKind.MCQT: _spec("mcnn", (85, 304), [(46, 96, (2, 209)), (6, 1, (3, 1)), (5, 1, None)],
                                2, "log", w, hidden_units, dropout_rate),
        FeatureKind.ODF: _spec("rcnn", (85, 3), [(40, 3, (2, 1)), (6, 1, (3, 1)), (6, 1, None)],
                               17, "euclidean", w, hidden_units, dropout_rate),
        FeatureKind.CHROMA: _spec("hcnn", (45, 12), [(6, 3, (2, 2)), (6, 3, (3, 3)), (5, 1, None)],
                                  2, "log", w, hidden_units, dropout_rate),
        FeatureKind.LFS: _spec("bcnn", (85, 10), [(6, 3, (2, 2)), (8, 4, (3, 1)), (11, 1, None)],
                               17, "euclidean", w, hidden_units, dropout_rate),
    }


def spec_hash(spec: NetworkSpec) -> str:
    return hashlib.sha256(json.dumps(spec.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# -- data --------------------------------------------------------------------

def augment_chroma_shifts(inputs: list[NetworkInput]) -> list[NetworkInput]:
    """Every window under all 12 circular pitch-class shifts, labels kept."""
    out = []
    for inp in inputs:
        if inp.window.shape[-1] != 12:
            raise ValueError("chroma shifts need 12-bin windows")
        for s in range(12):
            out.append(NetworkInput(np.roll(inp.window, s, axis=-1), inp.center_tatum,
                                    inp.covered_tatums, inp.label))
    return out


def balance_indices(labels, rng: np.random.Generator) -> np.ndarray:
    """Indices with the majority class subsampled (without replacement) to
    the minority count, in ascending order."""
    labels = np.asarray(labels)
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be present to balance")
    k = min(len(pos), len(neg))
    if len(pos) > k:
        pos = rng.choice(pos, k, replace=False)
    if len(neg) > k:
        neg = rng.choice(neg, k, replace=False)
    return np.sort(np.concatenate([pos, neg]))


def balance_classes(inputs: list[NetworkInput], rng: np.random.Generator) -> list[NetworkInput]:
    labels = [int(inp.label) for inp in inputs]
    return [inputs[i] for i in balance_indices(labels, rng)]


@dataclass
class WindowSet:
    """Training windows of one feature across songs, built lazily per batch.

    ``examples`` rows are ``(song, tatum, chroma shift)``.
    """

    kind: FeatureKind
    window_tatums: int
    padded: list[np.ndarray]
    downbeat: list[np.ndarray]  # 0/1 per tatum, per song
    examples: np.ndarray

    @classmethod
    def from_songs(cls, kind, sync_features: list[SyncFeature], downbeat_tatums: list,
                   window_tatums: int | None = None) -> "WindowSet":
        kind = FeatureKind(kind)
        wt = window_tatums or WINDOW_TATUMS[kind]
        padded, labels, rows = [], [], []
        for i, (sf, db) in enumerate(zip(sync_features, downbeat_tatums)):
            padded.append(padded_blocks(sf, wt))
            g = np.zeros(sf.n_tatums, dtype=np.int64)
            g[np.asarray(db, dtype=np.int64)] = 1
            labels.append(g)
            rows.append(np.stack([np.full(sf.n_tatums, i), np.arange(sf.n_tatums),
                                  np.zeros(sf.n_tatums, dtype=np.int64)], axis=1))
        examples = np.concatenate(rows) if rows else np.zeros((0, 3), dtype=np.int64)
        return cls(kind, wt, padded, labels, examples.astype(np.int64))

    def center_labels(self) -> np.ndarray:
        return np.array([self.downbeat[s][k] for s, k, _ in self.examples])

    def balanced(self, rng) -> "WindowSet":
        keep = balance_indices(self.center_labels(), rng)
        return WindowSet(self.kind, self.window_tatums, self.padded, self.downbeat,
                         self.examples[keep])

    def with_chroma_shifts(self) -> "WindowSet":
        if self.kind != FeatureKind.CHROMA:
            raise ValueError("chroma shifts apply to chroma windows only")
        ex = np.repeat(self.examples, 12, axis=0)
        ex[:, 2] = np.tile(np.arange(12), len(self.examples))
        return WindowSet(self.kind, self.window_tatums, self.padded, self.downbeat, ex)

    def __len__(self):
        return len(self.examples)

    def batch(self, rows: np.ndarray, multi_label: bool):
        """Inputs (B, N0, M0) and targets for the selected example rows."""
        ex = self.examples[rows]
        half = self.window_tatums // 2
        xs, ys = [], []
        for s, k, shift in ex:
            x = window_batch(self.padded[s], [k], self.window_tatums)[0]
            xs.append(np.roll(x, shift, axis=-1) if shift else x)
            g = self.downbeat[s]
            if multi_label:
                ys.append(g[mirror_index(np.arange(k - half, k + half + 1), len(g))])
            else:
                ys.append(g[k])
        y = np.array(ys, dtype=np.float64 if multi_label else np.int64)
        return np.stack(xs), y


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class TrainResult:
    params: Parameters
    loss_curve: list[float]
    seconds: float


def train_network(spec: NetworkSpec, data: WindowSet, config: TrainConfig,
                  params: Parameters | None = None) -> TrainResult:
    """Mini-batch SGD with momentum on the batch-mean loss.

    Initialisation, shuffling and dropout all draw from one generator seeded
    with ``config.seed``.
    """
    if len(data) == 0:
        raise ValueError("no training windows")
    multi = spec.loss == "euclidean"
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_parameters(spec, rng)
    velocity = None
    curve = []
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            x, y = data.batch(rows, multi)
            rec = forward(spec, params, x, training=True, rng=rng, record=True)
            total += float(loss_value(spec, rec.output, y).sum())
            grads = backward(spec, params, rec, y, scale=1.0 / len(rows))
            new_params, velocity = sgd_step(params, grads, config.learning_rate,
                                            config.momentum, velocity)
            if not new_params.is_finite():
                raise TrainingDiverged(f"{spec.name}: non-finite parameters in epoch {epoch}",
                                       params, epoch)
            params = new_params
        mean = total / len(order)
        if not np.isfinite(mean):
            raise TrainingDiverged(f"{spec.name}: non-finite loss in epoch {epoch}", params, epoch)
        curve.append(mean)
        log.info("%s epoch %d/%d loss %.6f", spec.name, epoch + 1, config.epochs, mean)
    return TrainResult(params, curve, time.perf_counter() - t0)


# -- inference ---------------------------------------------------------------

@dataclass(frozen=True)
class LikelihoodSeries:
    values: np.ndarray
    source: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("likelihood must be one value per tatum")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("likelihood values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def average_overlaps(outputs: np.ndarray, n_tatums: int) -> np.ndarray:
    """Per-tatum mean of multi-label outputs; row ``k`` covers tatums
    ``k - h .. k + h``. Mirrored (out-of-range) positions are ignored."""
    outputs = np.asarray(outputs, dtype=np.float64)
    width = outputs.shape[1]
    half = width // 2
    acc = np.zeros(n_tatums)
    cnt = np.zeros(n_tatums)
    for j in range(width):
        src = np.arange(len(outputs))
        dst = src + j - half
        ok = (dst >= 0) & (dst < n_tatums)
        np.add.at(acc, dst[ok], outputs[src[ok], j])
        np.add.at(cnt, dst[ok], 1)
    return acc / np.maximum(cnt, 1)


def network_outputs(spec: NetworkSpec, params: Parameters, sf: SyncFeature,
                    window_tatums: int, chunk: int = 256) -> np.ndarray:
    padded = padded_blocks(sf, window_tatums)
    outs = []
    for start in range(0, sf.n_tatums, chunk):
        centers = np.arange(start, min(start + chunk, sf.n_tatums))
        outs.append(forward(spec, params, window_batch(padded, centers, window_tatums)))
    return np.concatenate(outs)


def infer_likelihood(spec: NetworkSpec, params: Parameters, sf: SyncFeature,
                     window_tatums: int | None = None) -> LikelihoodSeries:
    wt = window_tatums or WINDOW_TATUMS[sf.kind]
    out = network_outputs(spec, params, sf, wt)
    if spec.loss == "log":
        vals = out[:, DOWNBEAT_CLASS]
    else:
        vals = average_overlaps(out, sf.n_tatums)
    return LikelihoodSeries(np.clip(vals, 0.0, 1.0), sf.kind.value)


def fuse_average(series: list[LikelihoodSeries]) -> LikelihoodSeries:
    if not series:
        raise ValueError("nothing to fuse")
    n = len(series[0])
    if any(len(s) != n for s in series):
        raise ValueError("likelihood series differ in length")
    sources = [s.source for s in series]
    if len(set(sources)) != len(sources):
        raise ValueError("duplicate likelihood sources")
    return LikelihoodSeries(np.mean([s.values for s in series], axis=0), "fused")


# -- bundles -----------------------------------------------------------------

@dataclass
class EnsembleModel:
    specs: dict[FeatureKind, NetworkSpec]
    params: dict[FeatureKind, Parameters]
    metadata: dict = field(default_factory=dict)

    @property
    def kinds(self) -> list[FeatureKind]:
        return [k for k in FeatureKind if k in self.specs]

    def likelihoods(self, sync: dict[FeatureKind, SyncFeature]) -> dict[str, LikelihoodSeries]:
        out = {k.value: infer_likelihood(self.specs[k], self.params[k], sync[k]) for k in self.kinds}
        out["fused"] = fuse_average(list(out.values()))
        return out

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        nets = {}
        for k in self.kinds:
            name = NETWORK_FOR[k]
            save_weights(d / name, self.specs[k], self.params[k],
                         {"feature": k.value, **self.metadata.get("networks", {}).get(name, {})})
            nets[name] = {"feature": k.value, "weights": f"{name}.json",
                          "spec_hash": spec_hash(self.specs[k])}
        manifest = {"bundle_version": BUNDLE_VERSION, "networks": nets,
                    "metadata": {k: v for k, v in self.metadata.items() if k != "networks"}}
        (d / "ensemble.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> "EnsembleModel":
        d = Path(directory)
        mpath = d / "ensemble.json"
        if not mpath.is_file():
            raise FileNotFoundError(f"model bundle manifest not found: {mpath}")
        manifest = json.loads(mpath.read_text())
        if manifest.get("bundle_version") != BUNDLE_VERSION:
            raise ValueError(f"{mpath}: unsupported bundle_version")
        specs, params = {}, {}
        for name, entry in manifest["networks"].items():
            spec, p, _ = load_weights(d / entry["weights"])
            if spec_hash(spec) != entry["spec_hash"]:
                raise ValueError(f"{mpath}: spec hash mismatch for {name}")
            kind = FeatureKind(entry["feature"])
            specs[kind], params[kind] = spec, p
        return cls(specs, params, manifest.get("metadata", {}))
