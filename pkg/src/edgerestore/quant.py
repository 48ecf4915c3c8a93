"""Affine uint8 quantization: calibration, (de)quantization and requantization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from edgerestore.errors import CalibrationError
from edgerestore.tensor import QuantParams, QuantTensor

QMIN, QMAX = 0, 255


def round_half_away(x):
    """Round to nearest integer, ties away from zero. Works on scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    whole = np.trunc(x)
    frac = x - whole  # exact for float64
    return whole + np.where(np.abs(frac) >= 0.5, np.sign(x), 0.0)


@dataclass
class CalibrationStats:
    observed_min: float = math.inf
    observed_max: float = -math.inf
    sample_count: int = 0

    def observe(self, values) -> "CalibrationStats":
        arr = np.asarray(values)
        if arr.size:
            self.observed_min = min(self.observed_min, float(arr.min()))
            self.observed_max = max(self.observed_max, float(arr.max()))
            self.sample_count += int(arr.size)
        return self

    def merge(self, other: "CalibrationStats") -> "CalibrationStats":
        return CalibrationStats(
            min(self.observed_min, other.observed_min),
            max(self.observed_max, other.observed_max),
            self.sample_count + other.sample_count,
        )


def calibrate(stats: CalibrationStats) -> QuantParams:
    """Choose scale and zero point covering the observed range plus real zero.

    A degenerate range (min == max) is widened to span 1.0, giving scale 1/255.
    """
    if stats.sample_count <= 0:
        raise CalibrationError("cannot calibrate from empty statistics")
    lo, hi = float(stats.observed_min), float(stats.observed_max)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise CalibrationError(f"invalid observed range [{lo}, {hi}]")
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if stats.observed_min == stats.observed_max and hi - lo < 1.0:
        hi = lo + 1.0
    scale = (hi - lo) / (QMAX - QMIN)
    zero_point = int(np.clip(round_half_away(-lo / scale), QMIN, QMAX))
    return QuantParams(scale, zero_point)


def calibrate_array(values) -> QuantParams:
    return calibrate(CalibrationStats().observe(values))


def quantize_values(x, p: QuantParams) -> np.ndarray:
    q = round_half_away(np.asarray(x, dtype=np.float64) / p.scale) + p.zero_point
    return np.clip(q, QMIN, QMAX).astype(np.uint8)


def dequantize_values(q, p: QuantParams, dtype=np.float32) -> np.ndarray:
    real = (np.asarray(q, dtype=np.float64) - p.zero_point) * p.scale
    return real.astype(dtype)


def quantize(t: np.ndarray, p: QuantParams) -> QuantTensor:
    return QuantTensor(np.ascontiguousarray(quantize_values(t, p)), p)


def dequantize(q: QuantTensor) -> np.ndarray:
    return dequantize_values(q.data, q.params)


def fake_quantize(t: np.ndarray, p: QuantParams) -> np.ndarray:
    return dequantize_values(quantize_values(t, p), p, dtype=np.asarray(t).dtype)


def requant_multiplier(in_scale: float, w_scale: float, out: QuantParams) -> float:
    return float(in_scale) * float(w_scale) / out.scale


def requantize(acc, in_scale: float, w_scale: float, out: QuantParams):
    """Map an int32 conv accumulator (scale in_scale*w_scale, zero point 0) to uint8.

    Accepts a scalar or an integer array; returns the same kind.
    """
    if in_scale <= 0 or w_scale <= 0:
        raise ValueError("scales must be positive")
    m = requant_multiplier(in_scale, w_scale, out)
    q = round_half_away(np.asarray(acc, dtype=np.float64) * m) + out.zero_point
    q = np.clip(q, QMIN, QMAX).astype(np.uint8)
    return int(q) if q.ndim == 0 else q


def lookup_table(fn, p_in: QuantParams, p_out: QuantParams) -> np.ndarray:
    """256-entry table realizing ``fn`` on the uint8 domain of ``p_in``."""
    real = dequantize_values(np.arange(256), p_in, dtype=np.float64)
    return quantize_values(fn(real), p_out)
