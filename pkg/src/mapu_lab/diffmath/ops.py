"""Differentiable operations.

Every op takes tensors (or array-likes, lifted to constants), computes its
forward value with numpy and registers a backward rule on the active tape.
Binary elementwise ops broadcast the way numpy does; gradients are summed back
to each input's shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike

from mapu_lab.diffmath import special
from mapu_lab.diffmath.tensor import FloatArray, Tensor, as_tensor, emit
from mapu_lab.errors import DomainError, ShapeError

SOFTPLUS_LINEAR_FROM = 30.0

Operand = Tensor | ArrayLike


def _unbroadcast(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ── Elementwise ──────────────────────────────────────────────────────────


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast(ta, tb, "add")
    return emit(
        ta.data + tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)),
        "add",
    )


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast(ta, tb, "sub")
    return emit(
        ta.data - tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)),
        "sub",
    )


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast(ta, tb, "mul")
    return emit(
        ta.data * tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g * tb.data, ta.shape), _unbroadcast(g * ta.data, tb.shape)),
        "mul",
    )


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast(ta, tb, "div")
    if np.any(tb.data == 0.0):
        raise DomainError("div: division by zero")
    out = ta.data / tb.data

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g / tb.data, ta.shape), _unbroadcast(-g * out / tb.data, tb.shape)

    return emit(out, (ta, tb), _backward, "div")


def neg(x: Operand) -> Tensor:
    t = as_tensor(x)
    return emit(-t.data, (t,), lambda g: (-g,), "neg")


def square(x: Operand) -> Tensor:
    t = as_tensor(x)
    return emit(t.data * t.data, (t,), lambda g: (2.0 * t.data * g,), "square")


def exp(x: Operand) -> Tensor:
    t = as_tensor(x)
    out = np.exp(t.data)
    return emit(out, (t,), lambda g: (g * out,), "exp")


def log(x: Operand) -> Tensor:
    t = as_tensor(x)
    if np.any(t.data <= 0.0):
        raise DomainError("log of non-positive values")
    return emit(np.log(t.data), (t,), lambda g: (g / t.data,), "log")


def relu(x: Operand) -> Tensor:
    t = as_tensor(x)
    active = t.data > 0.0
    return emit(np.where(active, t.data, 0.0), (t,), lambda g: (g * active,), "relu")


def _sigmoid(x: FloatArray) -> FloatArray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: Operand) -> Tensor:
    """ln(1 + e^x), switching to x + ln(1 + e^-x) above ``SOFTPLUS_LINEAR_FROM``."""
    t = as_tensor(x)
    large = t.data > SOFTPLUS_LINEAR_FROM
    out = np.where(
        large,
        t.data + np.log1p(np.exp(-np.abs(t.data))),
        np.log1p(np.exp(np.minimum(t.data, SOFTPLUS_LINEAR_FROM))),
    )
    return emit(out, (t,), lambda g: (g * _sigmoid(t.data),), "softplus")


def tanh(x: Operand) -> Tensor:
    t = as_tensor(x)
    out = np.tanh(t.data)
    return emit(out, (t,), lambda g: (g * (1.0 - out * out),), "tanh")


def clip_min(x: Operand, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x is above the floor."""
    t = as_tensor(x)
    above = t.data > floor
    return emit(np.where(above, t.data, floor), (t,), lambda g: (g * above,), "clip_min")


def lgamma(x: Operand) -> Tensor:
    t = as_tensor(x)
    return emit(special.lgamma(t.data), (t,), lambda g: (g * special.digamma(t.data),), "lgamma")


def digamma(x: Operand) -> Tensor:
    t = as_tensor(x)
    return emit(special.digamma(t.data), (t,), lambda g: (g * special.trigamma(t.data),), "digamma")


# ── Reductions ───────────────────────────────────────────────────────────


def _expand(g: FloatArray, shape: tuple[int, ...], axis: int | tuple[int, ...] | None, keepdims: bool) -> FloatArray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum(x: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    t = as_tensor(x)
    out = np.sum(t.data, axis=axis, keepdims=keepdims)
    return emit(np.asarray(out), (t,), lambda g: (_expand(g, t.shape, axis, keepdims),), "sum")


def mean(x: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    t = as_tensor(x)
    out = np.mean(t.data, axis=axis, keepdims=keepdims)
    count = t.data.size // max(np.asarray(out).size, 1)
    return emit(np.asarray(out), (t,), lambda g: (_expand(g, t.shape, axis, keepdims) / count,), "mean")


# ── Probabilities ────────────────────────────────────────────────────────


def softmax(x: Operand) -> Tensor:
    """Row softmax over the last axis, max-shifted."""
    t = as_tensor(x)
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return emit(out, (t,), _backward, "softmax")


def log_softmax(x: Operand) -> Tensor:
    t = as_tensor(x)
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return emit(out, (t,), lambda g: (g - probs * g.sum(axis=-1, keepdims=True),), "log_softmax")


# ── Layers ───────────────────────────────────────────────────────────────


def dense(x: Operand, w: Operand, b: Operand) -> Tensor:
    """x[B,F] @ w[F,O] + b[O]."""
    tx, tw, tb = as_tensor(x), as_tensor(w), as_tensor(b)
    if tx.data.ndim != 2 or tw.data.ndim != 2 or tx.shape[1] != tw.shape[0]:
        raise ShapeError(f"dense: input {tx.shape} does not match weight {tw.shape}")
    if tb.shape != (tw.shape[1],):
        raise ShapeError(f"dense: bias {tb.shape} does not match weight {tw.shape}")

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        return g @ tw.data.T, tx.data.T @ g, g.sum(axis=0)

    return emit(tx.data @ tw.data + tb.data, (tx, tw, tb), _backward, "dense")


def time_dense(x: Operand, w: Operand, b: Operand) -> Tensor:
    """The same dense map applied at every timestep: x[B,F,T] -> [B,O,T]."""
    tx, tw, tb = as_tensor(x), as_tensor(w), as_tensor(b)
    if tx.data.ndim != 3 or tw.data.ndim != 2 or tx.shape[1] != tw.shape[0] or tb.shape != (tw.shape[1],):
        raise ShapeError(f"time_dense: input {tx.shape}, weight {tw.shape}, bias {tb.shape}")
    out = np.einsum("bft,fo->bot", tx.data, tw.data, optimize=True) + tb.data[None, :, None]

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        gx = np.einsum("bot,fo->bft", g, tw.data, optimize=True)
        gw = np.einsum("bft,bot->fo", tx.data, g, optimize=True)
        return gx, gw, g.sum(axis=(0, 2))

    return emit(out, (tx, tw, tb), _backward, "time_dense")


def conv1d(
    x: Operand,
    w: Operand,
    b: Operand,
    stride: int = 1,
    pad: int | tuple[int, int] = 0,
) -> Tensor:
    """Cross-correlation of x[B,Cin,L] with w[Cout,Cin,Kw] plus bias[Cout].

    ``pad`` is either symmetric or a (left, right) pair of zero-padding widths.
    """
    tx, tw, tb = as_tensor(x), as_tensor(w), as_tensor(b)
    if tx.data.ndim != 3 or tw.data.ndim != 3:
        raise ShapeError(f"conv1d: expected 3-d input and weight, got {tx.shape} and {tw.shape}")
    batch, c_in, length = tx.shape
    c_out, w_in, width = tw.shape
    if w_in != c_in:
        raise ShapeError(f"conv1d: input has {c_in} channels, weight expects {w_in}")
    if tb.shape != (c_out,):
        raise ShapeError(f"conv1d: bias {tb.shape} does not match {c_out} output channels")
    if stride < 1:
        raise ShapeError("conv1d: stride must be positive")
    left, right = (pad, pad) if isinstance(pad, int) else pad
    padded_len = length + left + right
    l_out = (padded_len - width) // stride + 1
    if padded_len < width or l_out < 1:
        raise ShapeError(f"conv1d: output length {l_out} < 1 (L={length}, Kw={width}, pad={pad})")

    xp = np.pad(tx.data, ((0, 0), (0, 0), (left, right))) if left or right else tx.data
    windows = sliding_window_view(xp, width, axis=2)[:, :, : (l_out - 1) * stride + 1 : stride, :]
    # im2col: one row per (sample, position), columns ordered (channel, tap) like w.reshape(c_out, -1)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(batch * l_out, c_in * width)
    w2 = tw.data.reshape(c_out, c_in * width)
    out2 = cols @ w2.T
    out2 += tb.data
    out = np.ascontiguousarray(out2.reshape(batch, l_out, c_out).transpose(0, 2, 1))

    def _backward(g: FloatArray) -> tuple[FloatArray | None, FloatArray | None, FloatArray]:
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * l_out, c_out)
        gw = (g2.T @ cols).reshape(c_out, c_in, width) if tw.requires_grad else None
        gb = g2.sum(axis=0)
        if not tx.requires_grad:
            return None, gw, gb
        # col2im: scatter each tap's column back onto the padded input
        gcols = np.ascontiguousarray((g2 @ w2).reshape(batch, l_out, c_in, width).transpose(0, 2, 3, 1))
        gxp = np.zeros((batch, c_in, padded_len))
        span = (l_out - 1) * stride + 1
        for k in range(width):
            gxp[:, :, k : k + span : stride] += gcols[:, :, k, :]
        return gxp[:, :, left : left + length], gw, gb

    return emit(out, (tx, tw, tb), _backward, "conv1d")


@dataclass
class BatchNormStats:
    """Running per-channel statistics, updated in place during training."""

    mean: FloatArray
    var: FloatArray

    @classmethod
    def fresh(cls, channels: int) -> BatchNormStats:
        return cls(mean=np.zeros(channels), var=np.ones(channels))


def batchnorm(
    x: Operand,
    gamma: Operand,
    beta: Operand,
    running: BatchNormStats,
    mode: Literal["train", "eval"] = "train",
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_running: bool = True,
) -> Tensor:
    """Per-channel normalization of x[B,C,L].

    Train mode normalizes with the biased batch variance and, when
    ``update_running`` is set, folds the batch mean and unbiased variance into
    ``running`` with the given momentum. Eval mode uses ``running`` only.
    """
    tx, tg, tb = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if tx.data.ndim != 3:
        raise ShapeError(f"batchnorm: expected [B,C,L], got {tx.shape}")
    channels = tx.shape[1]
    if tg.shape != (channels,) or tb.shape != (channels,):
        raise ShapeError(f"batchnorm: gamma {tg.shape} / beta {tb.shape} do not match {channels} channels")
    g_b = tg.data[None, :, None]

    if mode == "eval":
        inv_std = 1.0 / np.sqrt(running.var + eps)
        xhat = (tx.data - running.mean[None, :, None]) * inv_std[None, :, None]

        def _eval_backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
            return g * g_b * inv_std[None, :, None], np.sum(g * xhat, axis=(0, 2)), g.sum(axis=(0, 2))

        return emit(g_b * xhat + tb.data[None, :, None], (tx, tg, tb), _eval_backward, "batchnorm")

    count = tx.shape[0] * tx.shape[2]
    if count < 2:
        raise ShapeError("batchnorm: train mode needs more than one element per channel")
    mu = tx.data.mean(axis=(0, 2))
    var = tx.data.var(axis=(0, 2))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (tx.data - mu[None, :, None]) * inv_std[None, :, None]
    if update_running:
        running.mean[:] = (1.0 - momentum) * running.mean + momentum * mu
        running.var[:] = (1.0 - momentum) * running.var + momentum * var * count / (count - 1)

    def _train_backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        dxhat = g * g_b
        sum_d = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dx = np.sum(dxhat * xhat, axis=(0, 2), keepdims=True)
        gx = inv_std[None, :, None] / count * (count * dxhat - sum_d - xhat * sum_dx)
        return gx, np.sum(g * xhat, axis=(0, 2)), g.sum(axis=(0, 2))

    return emit(g_b * xhat + tb.data[None, :, None], (tx, tg, tb), _train_backward, "batchnorm")


def rnn_tanh(x: Operand, w_ih: Operand, w_hh: Operand, b: Operand) -> Tensor:
    """Single-layer tanh recurrence over time: h_t = tanh(x_t W_ih + h_{t-1} W_hh + b), h_0 = 0.

    x is [B,F,T]; the result stacks every h_t as [B,H,T].
    """
    tx, ti, th, tb = as_tensor(x), as_tensor(w_ih), as_tensor(w_hh), as_tensor(b)
    if tx.data.ndim != 3 or ti.data.ndim != 2 or tx.shape[1] != ti.shape[0]:
        raise ShapeError(f"rnn_tanh: input {tx.shape} does not match w_ih {ti.shape}")
    hidden = ti.shape[1]
    if th.shape != (hidden, hidden) or tb.shape != (hidden,):
        raise ShapeError(f"rnn_tanh: w_hh {th.shape} / bias {tb.shape} do not match hidden size {hidden}")
    batch, _, steps = tx.shape
    hs = np.zeros((batch, hidden, steps))
    h = np.zeros((batch, hidden))
    for t in range(steps):
        h = np.tanh(tx.data[:, :, t] @ ti.data + h @ th.data + tb.data)
        hs[:, :, t] = h

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        gx = np.zeros_like(tx.data)
        gi = np.zeros_like(ti.data)
        gh = np.zeros_like(th.data)
        gb = np.zeros_like(tb.data)
        carry = np.zeros((batch, hidden))
        for t in reversed(range(steps)):
            h_t = hs[:, :, t]
            da = (g[:, :, t] + carry) * (1.0 - h_t * h_t)
            h_prev = hs[:, :, t - 1] if t > 0 else np.zeros((batch, hidden))
            gi += tx.data[:, :, t].T @ da
            gh += h_prev.T @ da
            gb += da.sum(axis=0)
            gx[:, :, t] = da @ ti.data.T
            carry = da @ th.data.T
        return gx, gi, gh, gb

    return emit(hs, (tx, ti, th, tb), _backward, "rnn_tanh")
