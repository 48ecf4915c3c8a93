"""Model files: ``<name>.manifest.json`` describing the graph plus a ``<name>.weights.bin`` blob."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Tuple

import numpy as np

from edgerestore.errors import GraphError, ModelFormatError
from edgerestore.nn.graph import CONV2D, LEAKY_RELU, LayerSpec, ModelGraph
from edgerestore.tensor import QuantParams

FORMAT = "edgerestore-model"
FORMAT_VERSION = 1
_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1"), "int32": np.dtype("<i4")}


def model_paths(directory, name: str) -> Tuple[Path, Path]:
    d = Path(directory)
    return d / f"{name}.manifest.json", d / f"{name}.weights.bin"


class _BlobWriter:
    def __init__(self):
        self.chunks = []
        self.offset = 0

    def put(self, arr: np.ndarray, dtype: str) -> dict:
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        ref = {"offset": self.offset, "length": len(raw), "dtype": dtype}
        self.chunks.append(raw)
        self.offset += len(raw)
        return ref


def manifest_dict(g: ModelGraph, blobs: _BlobWriter, weights_file: str) -> dict:
    layers = []
    for layer in g.layers:
        entry = {"id": layer.id, "kind": layer.kind, "inputs": list(layer.inputs)}
        if layer.kind == LEAKY_RELU:
            entry["slope"] = layer.slope
        if layer.kind == CONV2D:
            entry["kernel"] = list(layer.kernel)
            if g.quantized:
                entry["weights"] = blobs.put(layer.qweights, "uint8")
                entry["bias"] = blobs.put(layer.qbias, "int32")
                entry["weight_params"] = layer.wparams.to_dict()
                entry["bias_params"] = {
                    "scale": g.qparams[layer.inputs[0]].scale * layer.wparams.scale,
                    "zero_point": 0,
                }
            else:
                entry["weights"] = blobs.put(layer.weights, "float32")
                entry["bias"] = blobs.put(layer.bias, "float32")
        layers.append(entry)
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "name": g.name,
        "quantized": g.quantized,
        "input_shape": list(g.input_shape),
        "weights_file": weights_file,
        "layers": layers,
    }
    if g.quantized:
        doc["qparams"] = {k: v.to_dict() for k, v in g.qparams.items()}
    return doc


def save_model(g: ModelGraph, directory, name: str = None) -> Tuple[Path, Path]:
    g.validate()
    name = name or g.name
    manifest_path, weights_path = model_paths(directory, name)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blobs = _BlobWriter()
    doc = manifest_dict(g, blobs, weights_path.name)
    weights_path.write_bytes(b"".join(blobs.chunks))
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n")
    return manifest_path, weights_path


def _read_blob(raw: bytes, ref: dict, shape) -> np.ndarray:
    try:
        dtype = _DTYPES[ref["dtype"]]
        offset, length = int(ref["offset"]), int(ref["length"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed blob reference {ref!r}") from exc
    expected = int(np.prod(shape)) * dtype.itemsize
    if length != expected or offset < 0 or offset + length > len(raw):
        raise ModelFormatError(f"blob {ref!r} does not resolve to {expected} bytes in weights file")
    arr = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=offset)
    return arr.reshape(shape).astype(dtype.newbyteorder("="))


def load_model(manifest_path) -> ModelGraph:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise ModelFormatError(f"model manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"{manifest_path}: unsupported model format")
    weights_path = manifest_path.parent / doc["weights_file"]
    if not weights_path.exists():
        raise ModelFormatError(f"weights file not found: {weights_path}")
    raw = weights_path.read_bytes()
    quantized = bool(doc["quantized"])
    layers = []
    try:
        for entry in doc["layers"]:
            kw = {}
            if entry["kind"] == LEAKY_RELU:
                kw["slope"] = float(entry["slope"])
            if entry["kind"] == CONV2D:
                kernel = tuple(int(d) for d in entry["kernel"])
                kw["kernel"] = kernel
                if quantized:
                    kw["qweights"] = _read_blob(raw, entry["weights"], kernel)
                    kw["qbias"] = _read_blob(raw, entry["bias"], (kernel[3],))
                    kw["wparams"] = QuantParams.from_dict(entry["weight_params"])
                else:
                    kw["weights"] = _read_blob(raw, entry["weights"], kernel)
                    kw["bias"] = _read_blob(raw, entry["bias"], (kernel[3],))
            layers.append(LayerSpec(entry["id"], entry["kind"], list(entry["inputs"]), **kw))
        qparams = {}
        if quantized:
            qparams = {k: QuantParams.from_dict(v) for k, v in doc["qparams"].items()}
            missing = [k for k in ["input"] + [l.id for l in layers] if k not in qparams]
            if missing:
                raise ModelFormatError(f"{manifest_path}: quantized model lacks QuantParams for {missing}")
        g = ModelGraph(doc["name"], [int(d) for d in doc["input_shape"]], layers, qparams, quantized)
        g.validate()
    except (KeyError, TypeError, ValueError, GraphError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{manifest_path}: {exc}") from exc
    return g
