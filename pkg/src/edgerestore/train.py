"""Backpropagation, Adam and the supervised training loops for both networks."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from edgerestore.errors import DataError, ShapeError, StateError
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
from edgerestore.nn.runtime import Trace, forward_f32, forward_trace

log = logging.getLogger(__name__)

ParamKey = Tuple[str, str]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    iterations: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class GradientSet:
    params: Dict[ParamKey, np.ndarray]
    input: np.ndarray


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)


def _accumulate(grads: Dict[str, np.ndarray], key: str, value: np.ndarray) -> None:
    if key in grads:
        grads[key] = grads[key] + value
    else:
        grads[key] = value


def backward(g: ModelGraph, trace: Trace, upstream: np.ndarray) -> GradientSet:
    """Reverse-mode gradients of ``sum(upstream * output)`` for every parameter and the input."""
    if trace is None or trace.graph is not g or INPUT not in trace.acts:
        raise StateError(f"{g.name}: backward needs a forward_trace of this graph")
    acts = trace.acts
    if upstream.shape != trace.output.shape:
        raise ShapeError(f"upstream {upstream.shape} != output {trace.output.shape}")
    grads: Dict[str, np.ndarray] = {g.output_id: upstream}
    params: Dict[ParamKey, np.ndarray] = {}
    for layer in reversed(g.layers):
        dy = grads.pop(layer.id, None)
        if dy is None:
            dy = np.zeros_like(acts[layer.id])
        src = layer.inputs[0]
        x = acts[src]
        kind = layer.kind
        if kind == CONV2D:
            if layer.id not in trace.cols:
                raise StateError(f"trace lacks im2col cache for {layer.id!r}")
            dx, dw, db = K.conv2d_backward(trace.cols[layer.id], x.shape, layer.weights, dy)
            params[(layer.id, "w")] = dw
            params[(layer.id, "b")] = db
            _accumulate(grads, src, dx)
        elif kind == RELU:
            _accumulate(grads, src, dy * (x > 0))
        elif kind == LEAKY_RELU:
            _accumulate(grads, src, np.where(x >= 0, dy, dy * dy.dtype.type(layer.slope)))
        elif kind == SIGMOID:
            y = acts[layer.id]
            _accumulate(grads, src, dy * y * (1 - y))
        elif kind == MAXPOOL2:
            _accumulate(grads, src, K.maxpool2_backward(dy, trace.pool_idx[layer.id], x.shape))
        elif kind == UPSAMPLE2:
            _accumulate(grads, src, K.upsample2_backward(dy))
        elif kind == CONCAT:
            c = x.shape[-1]
            _accumulate(grads, src, dy[..., :c])
            _accumulate(grads, layer.inputs[1], dy[..., c:])
        elif kind == ADD:
            _accumulate(grads, src, dy)
            _accumulate(grads, layer.inputs[1], dy)
    dinput = grads.pop(INPUT, None)
    if dinput is None:
        dinput = np.zeros_like(acts[INPUT])
    return GradientSet(params, dinput)


# --- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: Dict[ParamKey, np.ndarray] = field(default_factory=dict)
    v: Dict[ParamKey, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[ParamKey, np.ndarray], grads: Dict[ParamKey, np.ndarray],
              state: AdamState, cfg: TrainConfig) -> Dict[ParamKey, np.ndarray]:
    """One bias-corrected Adam update. Moments are kept in float64; returns new arrays."""
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    updated = {}
    for key, p in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient {key} shape {g.shape} != parameter {p.shape}")
        m = state.m.get(key)
        v = state.v.get(key)
        m = (1 - cfg.beta1) * g if m is None else cfg.beta1 * m + (1 - cfg.beta1) * g
        v = (1 - cfg.beta2) * g * g if v is None else cfg.beta2 * v + (1 - cfg.beta2) * g * g
        state.m[key], state.v[key] = m, v
        step = cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        updated[key] = (p - step).astype(p.dtype)
    return updated


def set_parameters(g: ModelGraph, params: Dict[ParamKey, np.ndarray]) -> None:
    for layer in g.conv_layers():
        layer.weights = params[(layer.id, "w")]
        layer.bias = params[(layer.id, "b")]


def _fit(g: ModelGraph, next_batch, cfg: TrainConfig, label: str) -> Tuple[ModelGraph, List[Tuple[int, float]]]:
    model = g.copy()
    state = AdamState()
    history: List[Tuple[int, float]] = []
    for it in range(1, cfg.iterations + 1):
        xb, yb = next_batch()
        trace = forward_trace(model, xb)
        loss, dpred = mse_loss(trace.output, yb)
        grads = backward(model, trace, dpred)
        params = dict(model.parameters())
        set_parameters(model, adam_step(params, grads.params, state, cfg))
        history.append((it, loss))
        if it % 200 == 0 or it == cfg.iterations:
            log.info("%s iter %d/%d mse %.6f", label, it, cfg.iterations, loss)
    return model, history


def _as_pair_arrays(pairs) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray) and pairs[0].ndim == 4:
        return pairs
    pairs = list(pairs)
    if not pairs:
        raise DataError("training set is empty")
    xs = np.stack([np.asarray(p[0], np.float32).reshape(p[0].shape[-3:]) for p in pairs])
    ys = np.stack([np.asarray(p[1], np.float32).reshape(p[1].shape[-3:]) for p in pairs])
    return xs, ys


def train_generator(g: ModelGraph, tile_pairs, cfg: TrainConfig):
    """Fit the denoiser on (noisy triplet tile, clean tile) pairs with MSE.

    ``tile_pairs`` is a sequence of pairs or a tuple ``(inputs, targets)`` of
    NHWC arrays. Tiles are drawn in a per-epoch shuffled order from ``cfg.seed``.
    Returns ``(trained_graph, [(iteration, mse), ...])``.
    """
    xs, ys = _as_pair_arrays(tile_pairs)
    if len(xs) == 0:
        raise DataError("training set is empty")
    if xs.shape[1:] != tuple(g.input_shape[1:]):
        raise ShapeError(f"tiles {xs.shape[1:]} do not match model input {g.input_shape[1:]}")
    rng = np.random.default_rng(cfg.seed)
    order: List[int] = []

    def next_batch():
        idx = []
        while len(idx) < cfg.batch_size:
            if not order:
                order.extend(rng.permutation(len(xs)).tolist())
            idx.append(order.pop(0))
        return xs[idx], ys[idx]

    return _fit(g, next_batch, cfg, "generator")


def _plane(img) -> np.ndarray:
    """HxW, HxWx1 or 1xHxWx1 image as a float32 HxWx1 array."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 4 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] != 1:
        raise ShapeError(f"expected a single-channel image, got shape {np.shape(img)}")
    return arr


def train_finetune(ft: ModelGraph, pairs: Sequence, cfg: TrainConfig, crop: int = 64):
    """Fit the fine-tune net mapping quantized-pipeline outputs to ground truth.

    Each batch holds ``cfg.batch_size`` random ``crop`` x ``crop`` windows at
    seeded positions, so tile seams of the quantized path fall inside crops.
    """
    pairs = list(pairs)
    if not pairs:
        raise DataError("fine-tune training set is empty")
    inputs = [_plane(a) for a, _ in pairs]
    targets = [_plane(b) for _, b in pairs]
    for a, b in zip(inputs, targets):
        if a.shape != b.shape:
            raise ShapeError(f"fine-tune pair shapes differ: {a.shape} vs {b.shape}")
    h, w = inputs[0].shape[:2]
    crop = min(crop, h, w)
    rng = np.random.default_rng(cfg.seed)

    def next_batch():
        which = rng.integers(0, len(inputs), size=cfg.batch_size)
        ys = rng.integers(0, h - crop + 1, size=cfg.batch_size)
        xs = rng.integers(0, w - crop + 1, size=cfg.batch_size)
        xb = np.stack([inputs[k][r : r + crop, c : c + crop] for k, r, c in zip(which, ys, xs)])
        yb = np.stack([targets[k][r : r + crop, c : c + crop] for k, r, c in zip(which, ys, xs)])
        return xb, yb

    return _fit(ft, next_batch, cfg, "finetune")


def evaluate_mse(g: ModelGraph, xs: np.ndarray, ys: np.ndarray, batch: int = 32) -> float:
    total = 0.0
    for i in range(0, len(xs), batch):
        pred = forward_f32(g, xs[i : i + batch]).astype(np.float64)
        total += float(np.sum((pred - ys[i : i + batch]) ** 2))
    return total / ys.size


def write_loss_csv(path, history) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mse"])
        for it, loss in history:
            writer.writerow([it, repr(float(loss))])
