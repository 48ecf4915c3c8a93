"""Layer and graph descriptions shared by the float, fp16 and uint8 runtimes."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from edgerestore.errors import GraphError
from edgerestore.tensor import QuantParams

INPUT = "input"

CONV2D = "conv2d"
RELU = "relu"
LEAKY_RELU = "leaky_relu"
MAXPOOL2 = "maxpool2"
UPSAMPLE2 = "upsample_nearest2"
CONCAT = "concat"
SIGMOID = "sigmoid"
ADD = "add"

ACTIVATIONS = (RELU, LEAKY_RELU, SIGMOID)
KINDS = (CONV2D, RELU, LEAKY_RELU, MAXPOOL2, UPSAMPLE2, CONCAT, SIGMOID, ADD)
_ARITY = {CONCAT: 2, ADD: 2}


@dataclass
class LayerSpec:
    """One node of a model graph.

    Conv weights are laid out (kernel_h, kernel_w, in_channels, out_channels).
    A float graph carries ``weights``/``bias``; a quantized graph carries
    ``qweights`` (uint8, per-tensor ``wparams``) and ``qbias`` (int32 at scale
    input_scale * weight_scale, zero point 0) instead.
    """

    id: str
    kind: str
    inputs: List[str]
    slope: float = 0.2
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    qweights: Optional[np.ndarray] = None
    wparams: Optional[QuantParams] = None
    qbias: Optional[np.ndarray] = None
    kernel: Optional[Tuple[int, int, int, int]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"unknown layer kind {self.kind!r}")
        arity = _ARITY.get(self.kind, 1)
        if len(self.inputs) != arity:
            raise GraphError(f"{self.kind} layer {self.id!r} needs {arity} input(s)")
        if self.kind == CONV2D:
            source = self.weights if self.weights is not None else self.qweights
            if source is not None:
                if source.ndim != 4:
                    raise GraphError(f"conv {self.id!r} weights must be 4-d")
                shape = tuple(int(d) for d in source.shape)
                if self.kernel is not None and tuple(self.kernel) != shape:
                    raise GraphError(f"conv {self.id!r} weights {shape} != declared {self.kernel}")
                self.kernel = shape
            if self.kernel is None:
                raise GraphError(f"conv {self.id!r} has neither weights nor kernel shape")
            bias = self.bias if self.bias is not None else self.qbias
            if bias is not None and bias.shape != (self.kernel[3],):
                raise GraphError(f"conv {self.id!r} bias shape {bias.shape} != ({self.kernel[3]},)")

    @property
    def in_channels(self) -> int:
        return self.kernel[2]

    @property
    def out_channels(self) -> int:
        return self.kernel[3]


@dataclass
class ModelGraph:
    name: str
    input_shape: List[int]
    layers: List[LayerSpec]
    qparams: Dict[str, QuantParams] = field(default_factory=dict)
    quantized: bool = False

    @property
    def output_id(self) -> str:
        if not self.layers:
            raise GraphError("empty graph has no output")
        return self.layers[-1].id

    def layer(self, layer_id: str) -> LayerSpec:
        for layer in self.layers:
            if layer.id == layer_id:
                return layer
        raise KeyError(layer_id)

    def conv_layers(self) -> Iterator[LayerSpec]:
        return (layer for layer in self.layers if layer.kind == CONV2D)

    def pool_depth(self) -> int:
        return sum(layer.kind == MAXPOOL2 for layer in self.layers)

    def validate(self) -> None:
        if not self.layers:
            raise GraphError("graph has no layers")
        seen = {INPUT}
        consumed = set()
        for layer in self.layers:
            if layer.id in seen:
                raise GraphError(f"duplicate layer id {layer.id!r}")
            for src in layer.inputs:
                if src not in seen:
                    raise GraphError(f"layer {layer.id!r} uses {src!r} before it is defined")
                consumed.add(src)
            seen.add(layer.id)
        dangling = [l.id for l in self.layers[:-1] if l.id not in consumed]
        if dangling:
            raise GraphError(f"graph must have exactly one output; unused layers: {dangling}")
        if self.quantized:
            missing = [k for k in [INPUT] + [l.id for l in self.layers] if k not in self.qparams]
            if missing:
                raise GraphError(f"quantized graph lacks QuantParams for {missing}")
        self.infer_shapes(self.input_shape)

    def infer_shapes(self, input_shape) -> Dict[str, Tuple[int, ...]]:
        """Propagate an NHWC shape through the graph; raises GraphError on mismatch."""
        shapes: Dict[str, Tuple[int, ...]] = {INPUT: tuple(int(d) for d in input_shape)}
        if len(shapes[INPUT]) != 4:
            raise GraphError(f"input shape must be NHWC, got {input_shape}")
        for layer in self.layers:
            src = [shapes[i] for i in layer.inputs]
            n, h, w, c = src[0]
            if layer.kind == CONV2D:
                if c != layer.in_channels:
                    raise GraphError(
                        f"conv {layer.id!r} expects {layer.in_channels} channels, got {c}"
                    )
                out = (n, h, w, layer.out_channels)
            elif layer.kind == MAXPOOL2:
                if h % 2 or w % 2:
                    raise GraphError(f"maxpool {layer.id!r} needs even spatial dims, got {h}x{w}")
                out = (n, h // 2, w // 2, c)
            elif layer.kind == UPSAMPLE2:
                out = (n, 2 * h, 2 * w, c)
            elif layer.kind == CONCAT:
                if src[0][:3] != src[1][:3]:
                    raise GraphError(f"concat {layer.id!r} operands differ: {src[0]} vs {src[1]}")
                out = (n, h, w, c + src[1][3])
            elif layer.kind == ADD:
                if src[0] != src[1]:
                    raise GraphError(f"add {layer.id!r} operands differ: {src[0]} vs {src[1]}")
                out = src[0]
            else:
                out = src[0]
            shapes[layer.id] = out
        return shapes

    def check_input(self, shape) -> Dict[str, Tuple[int, ...]]:
        """Validate a runtime input shape: channels must match, spatial dims may vary."""
        if len(shape) != 4:
            raise GraphError(f"expected NHWC input, got shape {tuple(shape)}")
        if shape[3] != self.input_shape[3]:
            raise GraphError(
                f"{self.name}: input has {shape[3]} channels, model expects {self.input_shape[3]}"
            )
        return self.infer_shapes(shape)

    def parameters(self) -> Iterator[Tuple[Tuple[str, str], np.ndarray]]:
        """Trainable float arrays keyed by (layer id, 'w' | 'b')."""
        for layer in self.conv_layers():
            if layer.weights is None:
                raise GraphError(f"{self.name}: layer {layer.id!r} has no float weights")
            yield (layer.id, "w"), layer.weights
            yield (layer.id, "b"), layer.bias

    def copy(self) -> "ModelGraph":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "ModelGraph":
        g = self.copy()
        for layer in g.conv_layers():
            layer.weights = layer.weights.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
        return g
