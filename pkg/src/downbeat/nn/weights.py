"""Weight files: a JSON manifest next to a raw little-endian float64 blob.

The blob holds, layer by layer, ``W`` in ``[t][v][l][l']`` order followed by
``b``. The manifest records the network spec, array shapes, byte length and
SHA-256 of the blob, plus free-form metadata such as the training seed.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .network import NetworkSpec, Parameters

FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


class WeightFileError(ValueError):
    pass


def _blob(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype=_LE_F64).tobytes() for a in arrays)


def save_weights(path, spec: NetworkSpec, params: Parameters, metadata: dict | None = None) -> Path:
    """Write ``<path>.json`` and ``<path>.bin``; returns the manifest path."""
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    blob = _blob(params.arrays())
    manifest = {
        "format_version": FORMAT_VERSION,
        "spec": spec.to_dict(),
        "weight_shapes": [list(w.shape) for w in params.weights],
        "bias_shapes": [list(b.shape) for b in params.biases],
        "dtype": "<f8",
        "blob": base.name + ".bin",
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "metadata": metadata or {},
    }
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".bin").write_bytes(blob)
    mpath = base.with_suffix(".json")
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return mpath


def load_weights(path) -> tuple[NetworkSpec, Parameters, dict]:
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    mpath = base.with_suffix(".json")
    if not mpath.is_file():
        raise FileNotFoundError(f"weight manifest not found: {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as err:
        raise WeightFileError(f"{mpath}: invalid JSON ({err})") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise WeightFileError(f"{mpath}: format_version {version!r}, expected {FORMAT_VERSION}")
    blob = (mpath.parent / manifest["blob"]).read_bytes()
    if len(blob) != manifest["blob_bytes"]:
        raise WeightFileError(f"{mpath}: blob has {len(blob)} bytes, "
                              f"manifest says {manifest['blob_bytes']}")
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise WeightFileError(f"{mpath}: blob checksum mismatch")
    spec = NetworkSpec.from_dict(manifest["spec"])
    flat = np.frombuffer(blob, dtype=_LE_F64).astype(np.float64)
    ws, bs, pos = [], [], 0
    for wshape, bshape in zip(manifest["weight_shapes"], manifest["bias_shapes"]):
        for shape, out in ((wshape, ws), (bshape, bs)):
            size = int(np.prod(shape))
            out.append(flat[pos:pos + size].reshape(shape).copy())
            pos += size
    for layer, w in zip(spec.layers, ws):
        if tuple(w.shape) != layer.conv:
            raise WeightFileError(f"{mpath}: weight shape {w.shape} does not match {layer.conv}")
    return spec, Parameters(ws, bs), manifest.get("metadata", {})


def save_matrix(path, matrix: np.ndarray, metadata: dict) -> Path:
    """Single matrix in the same manifest-plus-blob layout."""
    base = Path(path).with_suffix("")
    blob = _blob([matrix])
    manifest = {"format_version": FORMAT_VERSION, "shape": list(matrix.shape), "dtype": "<f8",
                "blob": base.name + ".bin", "blob_bytes": len(blob),
                "blob_sha256": hashlib.sha256(blob).hexdigest(), "metadata": metadata}
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".bin").write_bytes(blob)
    mpath = base.with_suffix(".json")
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return mpath


def load_matrix(path) -> tuple[np.ndarray, dict]:
    mpath = Path(path).with_suffix(".json")
    if not mpath.is_file():
        raise FileNotFoundError(f"matrix manifest not found: {mpath}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise WeightFileError(f"{mpath}: unsupported format_version")
    blob = (mpath.parent / manifest["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise WeightFileError(f"{mpath}: blob checksum mismatch")
    m = np.frombuffer(blob, dtype=_LE_F64).astype(np.float64).reshape(manifest["shape"])
    return m, manifest["metadata"]
