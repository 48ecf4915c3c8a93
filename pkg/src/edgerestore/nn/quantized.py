"""Integer-only execution of quantized graphs and float-to-uint8 graph conversion."""

from __future__ import annotations

from typing import Dict, Mapping

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
from edgerestore.quant import (
    CalibrationStats,
    calibrate,
    calibrate_array,
    dequantize_values,
    lookup_table,
    quantize_values,
    requantize,
    round_half_away,
)
from edgerestore.tensor import QuantParams, QuantTensor

INT32_MIN, INT32_MAX = -(2**31), 2**31 - 1

_NONLINEAR = {
    RELU: lambda layer: (lambda v: np.maximum(v, 0.0)),
    LEAKY_RELU: lambda layer: (lambda v: np.where(v >= 0, v, v * layer.slope)),
    SIGMOID: lambda layer: K.sigmoid,
}


def quantize_bias(bias: np.ndarray, in_scale: float, w_scale: float) -> np.ndarray:
    q = round_half_away(np.asarray(bias, dtype=np.float64) / (in_scale * w_scale))
    return np.clip(q, INT32_MIN, INT32_MAX).astype(np.int32)


def quantize_graph(g: ModelGraph, stats: Mapping[str, CalibrationStats]) -> ModelGraph:
    """Attach QuantParams from per-layer calibration stats and drop float weights.

    Pool and upsample outputs reuse their input params so they stay exact
    integer pass-throughs.
    """
    if g.quantized:
        raise ModelFormatError(f"{g.name} is already quantized")
    params: Dict[str, QuantParams] = {INPUT: calibrate(stats[INPUT])}
    q = g.copy()
    q.name = g.name
    for layer in q.layers:
        if layer.kind in (MAXPOOL2, UPSAMPLE2):
            params[layer.id] = params[layer.inputs[0]]
            continue
        params[layer.id] = calibrate(stats[layer.id])
        if layer.kind == CONV2D:
            p_in = params[layer.inputs[0]]
            wp = calibrate_array(layer.weights)
            layer.wparams = wp
            layer.qweights = quantize_values(layer.weights, wp)
            layer.qbias = quantize_bias(layer.bias, p_in.scale, wp.scale)
            layer.weights = None
            layer.bias = None
    q.qparams = params
    q.quantized = True
    return q


def conv_accumulate(q_in: np.ndarray, p_in: QuantParams, qweights: np.ndarray,
                    wparams: QuantParams, qbias: np.ndarray) -> np.ndarray:
    """Integer accumulator sum((qx - zx) * (qw - zw)) + qbias per output element.

    Operands are small integers held in float64; every partial sum is an integer
    below 2**53, so the matrix product is exact and order-independent.
    """
    kh, kw, cin, cout = qweights.shape
    n, h, w, _ = q_in.shape
    xc = q_in.astype(np.float64) - p_in.zero_point  # zero padding == real zero
    wc = qweights.astype(np.float64) - wparams.zero_point
    acc = K.im2col(xc, kh, kw) @ wc.reshape(kh * kw * cin, cout)
    acc = np.rint(acc).astype(np.int64) + qbias.astype(np.int64)
    return acc.reshape(n, h, w, cout)


def _requant_identity(q: np.ndarray, p_in: QuantParams, p_out: QuantParams) -> np.ndarray:
    if p_in == p_out:
        return q
    return lookup_table(lambda v: v, p_in, p_out)[q]


def forward_q8(g: ModelGraph, x: QuantTensor) -> QuantTensor:
    """Run a quantized graph with uint8 activations between layers."""
    if not g.quantized:
        raise ModelFormatError(f"{g.name} is not a quantized model")
    missing = [k for k in [INPUT] + [l.id for l in g.layers] if k not in g.qparams]
    if missing:
        raise ModelFormatError(f"{g.name}: missing QuantParams for {missing}")
    if x.params != g.qparams[INPUT]:
        raise ModelFormatError(
            f"{g.name}: input params {x.params} differ from model input params {g.qparams[INPUT]}"
        )
    g.check_input(x.shape)
    P = g.qparams
    acts: Dict[str, np.ndarray] = {INPUT: x.data}
    for layer in g.layers:
        a = acts[layer.inputs[0]]
        p_a = P[layer.inputs[0]]
        p_out = P[layer.id]
        kind = layer.kind
        if kind == CONV2D:
            if layer.qweights is None or layer.wparams is None or layer.qbias is None:
                raise ModelFormatError(f"{g.name}: conv {layer.id!r} lacks quantized weights")
            acc = conv_accumulate(a, p_a, layer.qweights, layer.wparams, layer.qbias)
            y = requantize(acc, p_a.scale, layer.wparams.scale, p_out)
        elif kind in _NONLINEAR:
            y = lookup_table(_NONLINEAR[kind](layer), p_a, p_out)[a]
        elif kind == MAXPOOL2:
            y = _requant_identity(K.maxpool2(a)[0], p_a, p_out)
        elif kind == UPSAMPLE2:
            y = _requant_identity(K.upsample2(a), p_a, p_out)
        elif kind == CONCAT:
            b = acts[layer.inputs[1]]
            y = np.concatenate(
                [_requant_identity(a, p_a, p_out), _requant_identity(b, P[layer.inputs[1]], p_out)],
                axis=-1,
            )
        elif kind == ADD:
            b = acts[layer.inputs[1]]
            real = dequantize_values(a, p_a, np.float64) + dequantize_values(b, P[layer.inputs[1]], np.float64)
            y = quantize_values(real, p_out)
        else:  # pragma: no cover
            raise GraphError(f"unsupported layer kind {kind!r}")
        acts[layer.id] = np.ascontiguousarray(y, dtype=np.uint8)
    return QuantTensor(acts[g.output_id], P[g.output_id])
