"""NHWC numpy layers with explicit forward caches and backward passes."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_forward(x, w, b, stride, kernel):
    """3x3-style 'same'-padded convolution.

    x: (N, H, W, C); w: (C*k*k, F); returns (N, Ho, Wo, F) and a cache.
    """
    pad = kernel // 2
    n, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.reshape(n * ho * wo, c * kernel * kernel)
    out = cols @ w + b
    return out.reshape(n, ho, wo, -1), (cols, xp.shape, stride, kernel, ho, wo)


def conv_backward(dout, w, cache, need_dx=True):
    cols, xp_shape, stride, kernel, ho, wo = cache
    n = dout.shape[0]
    d2 = dout.reshape(n * ho * wo, -1)
    dw = cols.T @ d2
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    c = xp_shape[3]
    dcols = (d2 @ w.T).reshape(n, ho, wo, c, kernel, kernel)
    dxp = np.zeros(xp_shape)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += dcols[..., i, j]
    pad = kernel // 2
    return dxp[:, pad : xp_shape[1] - pad, pad : xp_shape[2] - pad, :], dw, db


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    return dout * (x > 0)


def pool_forward(x, grid):
    """Average-pool (N, H, W, C) onto a grid x grid layout and flatten; grid=1 is global pooling."""
    n, h, w, c = x.shape
    if h % grid or w % grid:
        raise ValueError(f"feature map {h}x{w} not divisible by pool grid {grid}")
    pooled = x.reshape(n, grid, h // grid, grid, w // grid, c).mean(axis=(2, 4))
    return pooled.reshape(n, -1), (x.shape, grid)


def pool_backward(dout, cache):
    (n, h, w, c), grid = cache
    bh, bw = h // grid, w // grid
    d = dout.reshape(n, grid, 1, grid, 1, c) / (bh * bw)
    return np.broadcast_to(d, (n, grid, bh, grid, bw, c)).reshape(n, h, w, c)


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
