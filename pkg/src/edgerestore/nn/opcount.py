"""Analytic operation counts for model graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from edgerestore.nn.graph import ACTIVATIONS, ADD, CONV2D, MAXPOOL2, ModelGraph


@dataclass
class OpCountReport:
    input_shape: tuple
    per_layer: Dict[str, int] = field(default_factory=dict)
    kinds: Dict[str, str] = field(default_factory=dict, repr=False)

    @property
    def total(self) -> int:
        return sum(self.per_layer.values())

    @property
    def conv_macs(self) -> int:
        return sum(v for k, v in self.per_layer.items() if self.kinds.get(k) == CONV2D)

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "per_layer": dict(self.per_layer),
            "conv_macs": self.conv_macs,
            "total": self.total,
        }


def count_ops(g: ModelGraph, input_shape) -> OpCountReport:
    """Count conv multiply-accumulates plus one op per pool/activation/add output element.

    Upsampling and concatenation move data only and count zero.
    """
    report = OpCountReport(tuple(int(d) for d in input_shape))
    if not g.layers:
        return report
    shapes = g.infer_shapes(input_shape)
    for layer in g.layers:
        n, h, w, c = shapes[layer.id]
        if layer.kind == CONV2D:
            kh, kw, cin, cout = layer.kernel
            ops = n * h * w * kh * kw * cin * cout
        elif layer.kind in ACTIVATIONS or layer.kind in (MAXPOOL2, ADD):
            ops = n * h * w * c
        else:
            ops = 0
        report.per_layer[layer.id] = int(ops)
        report.kinds[layer.id] = layer.kind
    return report


def tiled_image_ops(g: ModelGraph, image_hw=(1024, 1024), tile: int = 64) -> int:
    """Ops to process one full image as a grid of non-overlapping tiles."""
    tiles = int(np.ceil(image_hw[0] / tile) * np.ceil(image_hw[1] / tile))
    return tiles * count_ops(g, (1, tile, tile, g.input_shape[3])).total
