"""NHWC layer kernels (forward and backward) on numpy arrays.

All kernels are dtype-preserving so the same code runs in float32 for
inference/training and in float64 for gradient checking.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def same_pads(k: int) -> tuple:
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def pad_same(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    if kh == 1 and kw == 1:
        return x
    return np.pad(x, ((0, 0), same_pads(kh), same_pads(kw), (0, 0)))


def im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Rows are output pixels; columns ordered (kernel row, kernel col, channel)."""
    n, h, w, c = x.shape
    if kh == 1 and kw == 1:
        return x.reshape(n * h * w, c)
    win = sliding_window_view(pad_same(x, kh, kw), (kh, kw), axis=(1, 2))
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * c)


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, cols=None) -> np.ndarray:
    kh, kw, cin, cout = weights.shape
    n, h, w, _ = x.shape
    if cols is None:
        cols = im2col(x, kh, kw)
    y = cols @ weights.reshape(kh * kw * cin, cout)
    y += bias
    return y.reshape(n, h, w, cout)


def conv2d_input_grad(dy: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv input: correlate dy with the flipped, transposed kernel."""
    kh, kw, cin, cout = weights.shape
    n, h, w, _ = dy.shape
    wt = weights[::-1, ::-1].transpose(0, 1, 3, 2)
    if kh == 1 and kw == 1:
        return (dy.reshape(-1, cout) @ wt.reshape(cout, cin)).reshape(n, h, w, cin)
    (lo_h, hi_h), (lo_w, hi_w) = same_pads(kh), same_pads(kw)
    dyp = np.pad(dy, ((0, 0), (hi_h, lo_h), (hi_w, lo_w), (0, 0)))
    win = sliding_window_view(dyp, (kh, kw), axis=(1, 2))
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * cout)
    return (cols @ wt.reshape(kh * kw * cout, cin)).reshape(n, h, w, cin)


def conv2d_backward(cols: np.ndarray, x_shape: tuple, weights: np.ndarray, dy: np.ndarray):
    """Return (dx, dweights, dbias) given the forward im2col matrix."""
    cout = weights.shape[3]
    dy2 = dy.reshape(-1, cout)
    dw = (cols.T @ dy2).reshape(weights.shape)
    db = dy2.sum(axis=0)
    return conv2d_input_grad(dy, weights), dw, db


def relu(x):
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def leaky_relu(x, slope):
    return np.where(x >= 0, x, x * x.dtype.type(slope))


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype, copy=False)


def _windows(x):
    n, h, w, c = x.shape
    return x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(
        n, h // 2, w // 2, 4, c
    )


def maxpool2(x):
    """2x2/stride-2 max pool; also returns the in-window argmax (first max wins)."""
    win = _windows(x)
    idx = win.argmax(axis=3)
    return np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :], idx


def maxpool2_backward(dy, idx, x_shape):
    n, h, w, c = x_shape
    dwin = np.zeros((n, h // 2, w // 2, 4, c), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    return dwin.reshape(n, h // 2, w // 2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(x_shape)


def upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(dy):
    n, h, w, c = dy.shape
    return dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))
