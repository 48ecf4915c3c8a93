"""Float execution of a ModelGraph (float32, and half-precision simulation)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from edgerestore.errors import GraphError, ModelFormatError
from edgerestore.nn import kernels as K
from edgerestore.nn.graph import (
    ADD,
    CONCAT,
    CONV2D,
    INPUT,
    LEAKY_RELU,
    MAXPOOL2,
    RELU,
    SIGMOID,
    UPSAMPLE2,
    ModelGraph,
)


@dataclass
class Trace:
    """Activations kept from a forward pass, consumed by backpropagation."""

    graph: ModelGraph
    acts: Dict[str, np.ndarray]
    cols: Dict[str, np.ndarray] = field(default_factory=dict)
    pool_idx: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def output(self) -> np.ndarray:
        return self.acts[self.graph.output_id]


def _round_f16(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float16).astype(x.dtype)


def _execute(g: ModelGraph, x: np.ndarray, keep: bool, f16: bool, observer=None) -> Trace:
    if g.quantized:
        raise ModelFormatError(f"{g.name}: quantized model has no float weights; use forward_q8")
    x = np.asarray(x)
    g.check_input(x.shape)
    dtype = np.result_type(x.dtype, np.float32)
    x = x.astype(dtype, copy=False)
    if f16:
        x = _round_f16(x)
    acts: Dict[str, np.ndarray] = {INPUT: x}
    trace = Trace(g, acts)
    if observer is not None:
        observer(INPUT, x)
    last_use = {}
    if not keep:
        for pos, layer in enumerate(g.layers):
            for src in layer.inputs:
                last_use[src] = pos
    for pos, layer in enumerate(g.layers):
        a = acts[layer.inputs[0]]
        kind = layer.kind
        if kind == CONV2D:
            if layer.weights is None:
                raise ModelFormatError(f"{g.name}: conv {layer.id!r} has no float weights")
            w, b = layer.weights, layer.bias
            if f16:
                w, b = _round_f16(w), _round_f16(b)
            kh, kw = w.shape[:2]
            cols = K.im2col(a, kh, kw)
            y = K.conv2d(a, w.astype(dtype, copy=False), b.astype(dtype, copy=False), cols=cols)
            if keep:
                trace.cols[layer.id] = cols
        elif kind == RELU:
            y = K.relu(a)
        elif kind == LEAKY_RELU:
            y = K.leaky_relu(a, layer.slope)
        elif kind == SIGMOID:
            y = K.sigmoid(a)
        elif kind == MAXPOOL2:
            y, idx = K.maxpool2(a)
            if keep:
                trace.pool_idx[layer.id] = idx
        elif kind == UPSAMPLE2:
            y = K.upsample2(a)
        elif kind == CONCAT:
            y = np.concatenate([a, acts[layer.inputs[1]]], axis=-1)
        elif kind == ADD:
            y = a + acts[layer.inputs[1]]
        else:  # pragma: no cover - LayerSpec rejects unknown kinds
            raise GraphError(f"unsupported layer kind {kind!r}")
        if f16:
            y = _round_f16(y)
        acts[layer.id] = y
        if observer is not None:
            observer(layer.id, y)
        for src in layer.inputs:
            if last_use.get(src) == pos:
                acts.pop(src, None)
    if not keep:
        trace.acts = {g.output_id: acts[g.output_id]}
    return trace


def forward_f32(g: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Run the float graph. Dtype follows the weights/input (float32 by default)."""
    return _execute(g, x, keep=False, f16=False).output


def forward_trace(g: ModelGraph, x: np.ndarray) -> Trace:
    return _execute(g, x, keep=True, f16=False)


def forward_f16sim(g: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Float forward with input, weights and every layer output rounded to binary16."""
    return _execute(g, x, keep=False, f16=True).output


def forward_observe(g: ModelGraph, x: np.ndarray, observer) -> np.ndarray:
    """Float forward calling ``observer(layer_id, activation)`` for the input and every layer."""
    return _execute(g, x, keep=False, f16=False, observer=observer).output
