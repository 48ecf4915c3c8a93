"""Reference network topologies: the U-Net denoiser and the residual fine-tune net."""

from __future__ import annotations

from typing import List, Optional

import numpy as np

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
    LayerSpec,
    ModelGraph,
)

TILE = 64
# Width at which the generator's full-image cost dwarfs the fine-tune net
# (see `count-ops`); desk-scale training uses a narrower configurable width.
REFERENCE_BASE_WIDTH = 32


def he_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    kh, kw, cin, _ = shape
    limit = np.sqrt(6.0 / (kh * kw * cin))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class _Builder:
    def __init__(self, rng: Optional[np.random.Generator]):
        self.rng = rng
        self.layers: List[LayerSpec] = []

    def conv(self, lid, src, cin, cout, k=3, zero=False):
        shape = (k, k, cin, cout)
        if self.rng is None or zero:
            w = np.zeros(shape, np.float32)
        else:
            w = he_uniform(self.rng, shape)
        self.layers.append(LayerSpec(lid, CONV2D, [src], weights=w, bias=np.zeros(cout, np.float32)))
        return lid

    def add(self, lid, kind, *srcs, **kw):
        self.layers.append(LayerSpec(lid, kind, list(srcs), **kw))
        return lid


def build_reference_generator(base_width: int = 8, seed: Optional[int] = 0,
                              slope: float = 0.2) -> ModelGraph:
    """Three-level U-Net mapping a 64x64x3 slice triplet to a 64x64x1 image.

    Encoder widths w, 2w, 4w with a bottleneck at 8w; each stage is two 3x3
    convs with leaky ReLU. The head is a 1x1 conv followed by a sigmoid.
    Weights are He-uniform from ``seed`` (all zeros when ``seed`` is None).
    """
    if base_width < 1:
        raise ValueError("base_width must be >= 1")
    rng = None if seed is None else np.random.default_rng(seed)
    b = _Builder(rng)
    w = base_width

    def double_conv(prefix, src, cin, cout):
        x = b.conv(f"{prefix}_conv1", src, cin, cout)
        x = b.add(f"{prefix}_act1", LEAKY_RELU, x, slope=slope)
        x = b.conv(f"{prefix}_conv2", x, cout, cout)
        return b.add(f"{prefix}_act2", LEAKY_RELU, x, slope=slope)

    skips = []
    x, cin = INPUT, 3
    for level, width in enumerate((w, 2 * w, 4 * w), start=1):
        x = double_conv(f"enc{level}", x, cin, width)
        skips.append((x, width))
        x = b.add(f"enc{level}_pool", MAXPOOL2, x)
        cin = width
    x = double_conv("bott", x, cin, 8 * w)
    cin = 8 * w
    for level in (3, 2, 1):
        skip, width = skips[level - 1]
        x = b.add(f"dec{level}_up", UPSAMPLE2, x)
        x = b.add(f"dec{level}_cat", CONCAT, x, skip)
        x = double_conv(f"dec{level}", x, cin + width, width)
        cin = width
    x = b.conv("head_conv", x, cin, 1, k=1)
    b.add("head_sigmoid", SIGMOID, x)
    g = ModelGraph(f"generator_w{w}", [1, TILE, TILE, 3], b.layers)
    g.validate()
    return g


def build_finetune_net(seed: Optional[int] = 0, width: int = 16) -> ModelGraph:
    """Shallow residual CNN: three 3x3 convs (1->16->16->1) plus an input skip.

    The last conv starts at zero so the untrained net is the identity map.
    """
    rng = None if seed is None else np.random.default_rng(seed)
    b = _Builder(rng)
    x = b.conv("ft_conv1", INPUT, 1, width)
    x = b.add("ft_relu1", RELU, x)
    x = b.conv("ft_conv2", x, width, width)
    x = b.add("ft_relu2", RELU, x)
    x = b.conv("ft_conv3", x, width, 1, zero=True)
    b.add("ft_residual", ADD, x, INPUT)
    g = ModelGraph("finetune", [1, TILE, TILE, 1], b.layers)
    g.validate()
    return g
