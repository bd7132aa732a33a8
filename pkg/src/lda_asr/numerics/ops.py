"""Differentiable operations on :class:`~lda_asr.numerics.tensor.Tensor`.

Reductions whose length can change with the sequence length (attention over
keys, softmax denominators) are written so that trailing masked entries never
change the accumulation order of earlier ones. Dense projections run through
fixed-height BLAS tiles for the same reason: a frame's output must not depend
on how many frames follow it.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, as_tensor

GEMM_TILE_ROWS = 64


def _unbroadcast(grad, shape):
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _coerce(a, b):
    # constants adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


# -- elementwise ------------------------------------------------------------


def add(a, b):
    a, b = _coerce(a, b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def sub(a, b):
    a, b = _coerce(a, b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def mul(a, b):
    a, b = _coerce(a, b)
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), backward)


def div(a, b):
    a, b = _coerce(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), backward)


def neg(a):
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,))


def power(a, exponent):
    exponent = float(exponent)
    out = a.data ** exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return Tensor.from_op(out, (a,), backward)


def exp(a):
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,))


def log(a):
    out = np.log(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g / a.data,))


def relu(a):
    mask = a.data > 0
    out = np.where(mask, a.data, 0).astype(a.dtype)
    return Tensor.from_op(out, (a,), lambda g: (g * mask,))


def tanh(a):
    out = np.tanh(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out = _sigmoid(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def log_sigmoid(a):
    x = a.data
    out = np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))
    sig = _sigmoid(x)
    return Tensor.from_op(out.astype(x.dtype), (a,), lambda g: (g * (1.0 - sig),))


def silu(a):
    sig = _sigmoid(a.data)
    out = a.data * sig

    def backward(g):
        return (g * (sig * (1.0 + a.data * (1.0 - sig))),)

    return Tensor.from_op(out, (a,), backward)


def glu(a):
    """Gated linear unit over the last axis: first half times sigmoid(second half)."""
    half = a.shape[-1] // 2
    if a.shape[-1] != 2 * half:
        raise DimensionError(f"glu needs an even last dimension, got {a.shape[-1]}")
    x, gate = a.data[..., :half], a.data[..., half:]
    sig = _sigmoid(gate)
    out = x * sig

    def backward(g):
        return (np.concatenate([g * sig, g * x * sig * (1.0 - sig)], axis=-1),)

    return Tensor.from_op(out, (a,), backward)


# -- shape ------------------------------------------------------------------


def reshape(a, shape):
    out = a.data.reshape(shape)
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    out = np.transpose(a.data, axes)
    if axes is None:
        inverse = None
    else:
        inverse = tuple(np.argsort(axes))
    return Tensor.from_op(out, (a,), lambda g: (np.transpose(g, inverse),))


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)


def getitem(a, index):
    out = a.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(np.array(out, order="C"), (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return Tensor.from_op(out, tuple(tensors), backward)


def take_rows(table, index):
    """Embedding lookup ``table[index]``; gradient rows not indexed stay exactly zero."""
    index = np.asarray(index, dtype=np.int64)
    out = table.data[index]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(out, (table,), backward)


def gather_last(a, index):
    """``out[...] = a[..., index[...]]`` along the last axis."""
    index = np.asarray(index, dtype=np.int64)
    out = np.take_along_axis(a.data, index[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, index[..., None], g[..., None], axis=-1)
        return (full,)

    return Tensor.from_op(out, (a,), backward)


def mask_fill(a, mask, value):
    """Replace entries where ``mask`` is true by a constant."""
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, np.asarray(value, dtype=a.dtype), a.data)
    return Tensor.from_op(out, (a,), lambda g: (np.where(mask, 0, g).astype(g.dtype),))


# -- reductions -------------------------------------------------------------


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return Tensor.from_op(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def _stable_max(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    return np.where(np.isfinite(m), m, 0).astype(x.dtype)


def log_softmax(a, axis=-1):
    x = a.data
    shifted = x - _stable_max(x, axis)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (a,), backward)


def softmax(a, mask=None):
    """Softmax over the last axis; entries where ``mask`` is false get probability 0.

    The denominator is a running (left-to-right) sum so that appending masked
    entries leaves every probability bit-identical.
    """
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shifted = x - _stable_max(x, -1)
    e = np.exp(shifted)
    denom = np.cumsum(e, axis=-1)[..., -1:]
    out = (e / denom).astype(a.dtype)

    def backward(g):
        inner = np.cumsum(g * out, axis=-1)[..., -1:]
        return (out * (g - inner),)

    return Tensor.from_op(out, (a,), backward)


# -- linear algebra ---------------------------------------------------------


def _tiled_gemm(x2d, w):
    rows = x2d.shape[0]
    tile = GEMM_TILE_ROWS
    padded = -(-rows // tile) * tile
    out = np.empty((padded, w.shape[1]), dtype=np.result_type(x2d, w))
    buf = np.zeros((tile, x2d.shape[1]), dtype=x2d.dtype)
    for start in range(0, padded, tile):
        stop = min(start + tile, rows)
        if stop - start == tile:
            np.matmul(x2d[start:stop], w, out=out[start:start + tile])
        else:
            buf[: stop - start] = x2d[start:stop]
            buf[stop - start:] = 0
            np.matmul(buf, w, out=out[start:start + tile])
    return out[:rows]


def matmul(x, w):
    """``x @ w`` for ``x`` of shape (..., k) and a 2-D weight ``w`` of shape (k, n).

    Rows are pushed through fixed-shape tiles, so each output row depends only
    on its own input row.
    """
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2:
        raise DimensionError(f"matmul expects a 2-D right operand, got {w.shape}")
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"matmul shapes {x.shape} and {w.shape} do not align")
    lead = x.shape[:-1]
    x2d = np.ascontiguousarray(x.data.reshape(-1, x.shape[-1]))
    out = _tiled_gemm(x2d, w.data).reshape(*lead, w.shape[1])

    def backward(g):
        g2d = g.reshape(-1, w.shape[1])
        gx = (g2d @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2d.T @ g2d if w.requires_grad else None
        return gx, gw

    return Tensor.from_op(out, (x, w), backward)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def einsum(spec, a, b):
    """Two-operand einsum without repeated or operand-private summed indices."""
    a, b = as_tensor(a), as_tensor(b)
    inputs, output = spec.replace(" ", "").split("->")
    sa, sb = inputs.split(",")
    out = np.einsum(spec, a.data, b.data)

    def backward(g):
        ga = np.einsum(f"{output},{sb}->{sa}", g, b.data) if a.requires_grad else None
        gb = np.einsum(f"{sa},{output}->{sb}", a.data, g) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), backward)


# -- normalisation / convolution ------------------------------------------


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: last dim {d} vs gamma {gamma.shape} / beta {beta.shape}"
        )
    if eps <= 0:
        raise DimensionError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = centred * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        red = tuple(range(g.ndim - 1))
        ggamma = (g * xhat).sum(axis=red) if gamma.requires_grad else None
        gbeta = g.sum(axis=red) if beta.requires_grad else None
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), backward)


def depthwise_conv1d(x, kernel, causal):
    """Per-channel 1-D convolution over time.

    ``x`` is (B, T, C), ``kernel`` is (width, C). Causal mode pads ``width-1``
    frames on the left only; otherwise the padding is centred.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    width, channels = kernel.shape
    if x.shape[-1] != channels:
        raise DimensionError(f"conv channels {x.shape[-1]} vs kernel {kernel.shape}")
    left = width - 1 if causal else (width - 1) // 2
    right = width - 1 - left
    T = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    out = np.zeros_like(x.data)
    for i in range(width):
        out += xp[:, i:i + T] * kernel.data[i]

    def backward(g):
        gx = gk = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(width):
                gxp[:, i:i + T] += g * kernel.data[i]
            gx = gxp[:, left:left + T]
        if kernel.requires_grad:
            gk = np.stack([(g * xp[:, i:i + T]).sum(axis=(0, 1)) for i in range(width)])
        return gx, gk

    return Tensor.from_op(out, (x, kernel), backward)
