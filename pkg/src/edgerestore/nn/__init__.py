"""Graph description, float/fp16/uint8 runtimes and operation counting."""

from edgerestore.nn.graph import INPUT, LayerSpec, ModelGraph
from edgerestore.nn.models import (
    REFERENCE_BASE_WIDTH,
    build_finetune_net,
    build_reference_generator,
)
from edgerestore.nn.opcount import OpCountReport, count_ops, tiled_image_ops
from edgerestore.nn.quantized import forward_q8, quantize_graph
from edgerestore.nn.runtime import (
    Trace,
    forward_f16sim,
    forward_f32,
    forward_observe,
    forward_trace,
)

__all__ = [
    "INPUT",
    "LayerSpec",
    "ModelGraph",
    "OpCountReport",
    "REFERENCE_BASE_WIDTH",
    "Trace",
    "build_finetune_net",
    "build_reference_generator",
    "count_ops",
    "forward_f16sim",
    "forward_f32",
    "forward_observe",
    "forward_q8",
    "forward_trace",
    "quantize_graph",
    "tiled_image_ops",
]
