"""Layer primitives with explicit forward/backward passes.

All activations are ``(N, C, H, W)`` float64.  Each ``*_forward`` returns
``(out, cache)`` and the matching ``*_backward`` consumes the upstream
gradient and that cache.
"""

from __future__ import annotations

import numpy as np

from ..errors import ArgumentError, ShapeError

NORM_EPS = 1e-5
BN_MOMENTUM = 0.9


# --------------------------------------------------------------- convolution

def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")
    return x, False


def _im2col(x, k, dilation):
    n, c, h, w = x.shape
    pad = dilation * (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, h, w))
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i * dilation:i * dilation + h, j * dilation:j * dilation + w]
    return cols.reshape(n, c * k * k, h * w)


def _col2im(dcols, shape, k, dilation):
    n, c, h, w = shape
    pad = dilation * (k - 1) // 2
    dcols = dcols.reshape(n, c, k, k, h, w)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i * dilation:i * dilation + h, j * dilation:j * dilation + w] += dcols[:, :, i, j]
    return dxp[:, :, pad:pad + h, pad:pad + w]


def conv2d_forward(x, kernel, bias=None, dilation: int = 1):
    """'Same'-padded stride-1 convolution (cross-correlation) with dilation."""
    x, squeeze = _as_batch(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    o, c, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"kernel must be square and odd-sized, got {kh}x{kw}")
    if c != x.shape[1]:
        raise ShapeError(f"kernel expects {c} input channels, input has {x.shape[1]}")
    if dilation < 1:
        raise ArgumentError(f"dilation must be >= 1, got {dilation}")
    n, _, h, w = x.shape
    cols = _im2col(x, kh, dilation)
    out = np.matmul(kernel.reshape(o, -1), cols).reshape(n, o, h, w)
    if bias is not None:
        out += np.asarray(bias).reshape(1, o, 1, 1)
    cache = (cols, x.shape, kernel, dilation, bias is not None)
    return (out[0] if squeeze else out), cache


def conv2d_backward(dout, cache):
    """Returns ``(dx, dkernel, dbias)``; ``dbias`` is None without a bias."""
    cols, shape, kernel, dilation, has_bias = cache
    o, c, k, _ = kernel.shape
    n = shape[0]
    d = dout.reshape(n, o, -1)
    dkernel = np.einsum("nop,nqp->oq", d, cols).reshape(kernel.shape)
    dcols = np.matmul(kernel.reshape(o, -1).T, d)
    dx = _col2im(dcols, shape, k, dilation)
    dbias = d.sum(axis=(0, 2)) if has_bias else None
    return dx, dkernel, dbias


def conv2d(x, kernel, dilation: int = 1, bias=None):
    return conv2d_forward(x, kernel, bias, dilation)[0]


# ------------------------------------------------------------- normalisation

def group_norm_forward(x, groups: int, scale, shift, eps: float = NORM_EPS):
    """Normalise each (sample, channel group) to zero mean / unit variance."""
    x, squeeze = _as_batch(x)
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ArgumentError(f"{c} channels are not divisible into {groups} groups")
    xg = x.reshape(n, groups, -1)
    mean = xg.mean(axis=2, keepdims=True)
    var = ((xg - mean) ** 2).mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mean) * inv_std).reshape(n, c, h, w)
    scale = np.asarray(scale, dtype=np.float64).reshape(1, c, 1, 1)
    out = xhat * scale + np.asarray(shift, dtype=np.float64).reshape(1, c, 1, 1)
    cache = (xhat, inv_std, scale, groups)
    return (out[0] if squeeze else out), cache


def group_norm_backward(dout, cache):
    xhat, inv_std, scale, groups = cache
    n, c, h, w = xhat.shape
    dscale = (dout * xhat).sum(axis=(0, 2, 3))
    dshift = dout.sum(axis=(0, 2, 3))
    dxhat = (dout * scale).reshape(n, groups, -1)
    xh = xhat.reshape(n, groups, -1)
    m = xh.shape[2]
    dx = inv_std / m * (m * dxhat - dxhat.sum(axis=2, keepdims=True)
                        - xh * (dxhat * xh).sum(axis=2, keepdims=True))
    return dx.reshape(n, c, h, w), dscale, dshift


def group_norm(x, groups, scale, shift, eps: float = NORM_EPS):
    return group_norm_forward(x, groups, scale, shift, eps)[0]


def batch_norm_forward(x, scale, shift, running_mean, running_var, mode: str,
                       momentum: float = BN_MOMENTUM, eps: float = NORM_EPS):
    """Per-channel normalisation over (N, H, W).

    In train mode the batch statistics are used and the running estimates are
    updated in place: ``running = momentum * running + (1 - momentum) * batch``
    (biased batch variance).  Eval mode uses the running estimates.
    """
    if mode not in ("train", "eval"):
        raise ArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
    x, squeeze = _as_batch(x)
    c = x.shape[1]
    scale = np.asarray(scale, dtype=np.float64).reshape(1, c, 1, 1)
    shift = np.asarray(shift, dtype=np.float64).reshape(1, c, 1, 1)
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        var = ((x - mean) ** 2).mean(axis=(0, 2, 3), keepdims=True)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean.reshape(c)
        running_var *= momentum
        running_var += (1 - momentum) * var.reshape(c)
    else:
        mean = np.asarray(running_mean).reshape(1, c, 1, 1)
        var = np.asarray(running_var).reshape(1, c, 1, 1)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = xhat * scale + shift
    cache = (xhat, inv_std, scale, mode)
    return (out[0] if squeeze else out), cache


def batch_norm_backward(dout, cache):
    xhat, inv_std, scale, mode = cache
    dscale = (dout * xhat).sum(axis=(0, 2, 3))
    dshift = dout.sum(axis=(0, 2, 3))
    dxhat = dout * scale
    if mode == "eval":
        return dxhat * inv_std, dscale, dshift
    m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    dx = inv_std / m * (m * dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
    return dx, dscale, dshift


def batch_norm(x, scale, shift, running_mean, running_var, mode: str):
    return batch_norm_forward(x, scale, shift, running_mean, running_var, mode)[0]


# ------------------------------------------------------------- misc layers

def relu_forward(x):
    out = np.maximum(x, 0.0)
    return out, x > 0


def relu_backward(dout, cache):
    return np.where(cache, dout, 0.0)


def dropout_forward(x, rate: float, rng, mode: str):
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = np.where(keep, 1.0 / (1.0 - rate), 0.0)
    return x * scale, scale


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache


def dropout(x, rate, rng, mode):
    return dropout_forward(x, rate, rng, mode)[0]


def avg_pool2_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"2x2 pooling needs even extents, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)), x.shape


def avg_pool2_backward(dout, shape):
    return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * 0.25


def bilinear_matrix(n_out: int, n_in: int) -> np.ndarray:
    """1-D linear interpolation weights, half-pixel centres, edge clamped."""
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def upsample_forward(x, size):
    """Separable bilinear resize of the spatial axes to ``size`` (H, W)."""
    uh = bilinear_matrix(size[0], x.shape[2])
    uw = bilinear_matrix(size[1], x.shape[3])
    out = np.matmul(np.matmul(uh, x), uw.T)
    return out, (uh, uw)


def upsample_backward(dout, cache):
    uh, uw = cache
    return np.matmul(np.matmul(uh.T, dout), uw)
