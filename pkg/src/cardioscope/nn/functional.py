"""Differentiable ops on :class:`Tensor`: activations, 1-d convolution
family, pooling, normalisation and losses.

Sequence tensors are laid out (batch, channels, length).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import BatchTooSmall, NonFinite, ShapeMismatch
from .tensor import Tensor, as_tensor, node


# ---------------------------------------------------------------------------
# branch patterns of piecewise-linear ops

_pattern: tuple[str, list, list] | None = None


@contextmanager
def branch_pattern(mode: str, store: list):
    """``record`` appends the selection array of every relu / leaky_relu /
    max_pool1d call to ``store``; ``replay`` hands them back in call order,
    so the forward pass stays on one linear piece of the network."""
    global _pattern
    if mode not in ("record", "replay"):
        raise ValueError(f"unknown mode {mode!r}")
    prev, _pattern = _pattern, (mode, store, [0])
    try:
        yield
        if mode == "replay" and _pattern[2][0] != len(store):
            raise RuntimeError("replayed forward pass made fewer branch calls than recorded")
    finally:
        _pattern = prev


def _branch(compute):
    if _pattern is None:
        return compute()
    mode, store, cursor = _pattern
    if mode == "record":
        store.append(compute())
        return store[-1]
    value = store[cursor[0]]
    cursor[0] += 1
    return value


# ---------------------------------------------------------------------------
# elementwise

def relu(x: Tensor) -> Tensor:
    mask = _branch(lambda: x.data > 0)
    return node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = _branch(lambda: np.where(x.data > 0, 1.0, slope))
    return node(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return node(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    z = x.data
    return node(np.log(z), (x,), lambda g: (g / z,), "log")


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted log-sum-exp; reduces ``axis``."""
    z = x.data
    m = np.max(z, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(z - m), axis=axis, keepdims=True)
    out = (np.log(s) + m)
    soft = np.exp(z - out)
    return node(np.squeeze(out, axis=axis), (x,),
                lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), stable for large |x|."""
    z = x.data
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return node(out, (x,), lambda g: (g * sig,), "softplus")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity in eval."""
    if not training or rate <= 0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def concat(xs, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))
    return node(np.concatenate([x.data for x in xs], axis=axis), xs, vjp, "concat")


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


# ---------------------------------------------------------------------------
# convolution family

def same_padding(kernel: int) -> tuple[int, int]:
    """Symmetric padding, the odd extra element on the right (stride 1)."""
    total = kernel - 1
    return total // 2, total - total // 2


def conv1d_length(L: int, kernel: int, stride: int = 1, pad: tuple[int, int] = (0, 0)) -> int:
    return (L + pad[0] + pad[1] - kernel) // stride + 1


def conv_transpose1d_length(L: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (L - 1) * stride - 2 * padding + kernel


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           pad: tuple[int, int] = (0, 0)) -> Tensor:
    """Cross-correlation. x (N, Cin, L), w (Cout, Cin, K), b (Cout,).

    Implemented as im2col + one GEMM; the backward pass scatters the column
    gradient back tap by tap.
    """
    xd, wd = x.data, w.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[1] != wd.shape[1]:
        raise ShapeMismatch(f"conv1d: input {xd.shape} vs weight {wd.shape}")
    N, Cin, L = xd.shape
    Cout, _, K = wd.shape
    if pad != (0, 0):
        xd = np.pad(xd, ((0, 0), (0, 0), pad))
    Lp = xd.shape[2]
    Lout = (Lp - K) // stride + 1
    if Lout < 1:
        raise ShapeMismatch(f"conv1d: input length {L} too short for kernel {K}")
    span = stride * (Lout - 1) + 1

    win = np.lib.stride_tricks.sliding_window_view(xd, K, axis=2)[:, :, ::stride, :]
    cols = win.transpose(0, 2, 1, 3).reshape(N * Lout, Cin * K)
    wm = wd.reshape(Cout, Cin * K)
    out = (cols @ wm.T).reshape(N, Lout, Cout).transpose(0, 2, 1)
    if b is not None:
        out = out + b.data[None, :, None]

    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        gt = g.transpose(0, 2, 1).reshape(N * Lout, Cout)
        gw = (gt.T @ cols).reshape(wd.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gt @ wm).reshape(N, Lout, Cin, K)
            gx = np.zeros((N, Cin, Lp))
            for k in range(K):
                gx[:, :, k:k + span:stride] += dcols[:, :, :, k].transpose(0, 2, 1)
            if pad != (0, 0):
                gx = gx[:, :, pad[0]:pad[0] + L]
        grads = (gx, gw)
        if b is not None:
            grads += (g.sum(axis=(0, 2)),)
        return grads

    return node(np.ascontiguousarray(out), parents, vjp, "conv1d")


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Transposed convolution. x (N, Cin, L), w (Cin, Cout, K)."""
    xd, wd = x.data, w.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[1] != wd.shape[0]:
        raise ShapeMismatch(f"conv_transpose1d: input {xd.shape} vs weight {wd.shape}")
    N, Cin, L = xd.shape
    _, Cout, K = wd.shape
    Lfull = (L - 1) * stride + K
    Lout = Lfull - 2 * padding
    if Lout < 1:
        raise ShapeMismatch("conv_transpose1d: padding removes the whole output")
    span = stride * (L - 1) + 1

    xt = xd.transpose(0, 2, 1).reshape(N * L, Cin)
    wm = wd.reshape(Cin, Cout * K)
    cols = (xt @ wm).reshape(N, L, Cout, K)
    full = np.zeros((N, Cout, Lfull))
    for k in range(K):
        full[:, :, k:k + span:stride] += cols[:, :, :, k].transpose(0, 2, 1)
    out = full[:, :, padding:padding + Lout]
    if b is not None:
        out = out + b.data[None, :, None]

    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        gfull = np.zeros((N, Cout, Lfull))
        gfull[:, :, padding:padding + Lout] = g
        win = np.lib.stride_tricks.sliding_window_view(gfull, K, axis=2)[:, :, ::stride, :]
        gcols = win.transpose(0, 2, 1, 3).reshape(N * L, Cout * K)
        gx = (gcols @ wm.T).reshape(N, L, Cin).transpose(0, 2, 1) if x.requires_grad else None
        gw = (xt.T @ gcols).reshape(wd.shape) if w.requires_grad else None
        grads = (gx, gw)
        if b is not None:
            grads += (g.sum(axis=(0, 2)),)
        return grads

    return node(np.ascontiguousarray(out), parents, vjp, "conv_transpose1d")


def max_pool1d(x: Tensor, kernel: int, stride: int | None = None) -> Tensor:
    """Max over windows; the gradient goes to the first maximum in each window."""
    stride = stride or kernel
    xd = x.data
    N, C, L = xd.shape
    Lout = (L - kernel) // stride + 1
    if Lout < 1:
        raise ShapeMismatch(f"max_pool1d: length {L} shorter than kernel {kernel}")
    span = stride * (Lout - 1) + 1
    taps = np.stack([xd[:, :, k:k + span:stride] for k in range(kernel)], axis=-1)
    arg = _branch(lambda: taps.argmax(axis=-1))
    out = np.take_along_axis(taps, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gx = np.zeros_like(xd)
        for k in range(kernel):
            gx[:, :, k:k + span:stride] += g * (arg == k)
        return (gx,)

    return node(out, (x,), vjp, "max_pool1d")


def upsample1d(x: Tensor, size: int) -> Tensor:
    """Nearest-neighbour repeat along length."""
    N, C, L = x.shape
    return node(np.repeat(x.data, size, axis=2), (x,),
                lambda g: (g.reshape(N, C, L, size).sum(axis=3),), "upsample1d")


def adaptive_avg_pool1d(x: Tensor, output_size: int = 1) -> Tensor:
    N, C, L = x.shape
    if output_size == 1:
        return x.mean(axis=2, keepdims=True)
    if L % output_size:
        raise ShapeMismatch("adaptive_avg_pool1d: length must be divisible by output size")
    return x.reshape(N, C, output_size, L // output_size).mean(axis=3)


def pad1d(x: Tensor, left: int, right: int) -> Tensor:
    L = x.shape[2]
    return node(np.pad(x.data, ((0, 0), (0, 0), (left, right))), (x,),
                lambda g: (g[:, :, left:left + L],), "pad1d")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation; (N, C) or (N, C, L) input.

    In training mode the biased batch statistics normalise the input and are
    folded into the running buffers in place:
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    xd = x.data
    axes = (0,) if xd.ndim == 2 else (0, 2)
    bshape = (1, -1) if xd.ndim == 2 else (1, -1, 1)
    g_, b_ = gamma.data.reshape(bshape), beta.data.reshape(bshape)

    if training:
        m = int(np.prod([xd.shape[a] for a in axes]))
        if xd.shape[0] < 2:
            raise BatchTooSmall("batch norm in training mode needs batch >= 2")
        mu = xd.mean(axis=axes, keepdims=True)
        var = xd.var(axis=axes, keepdims=True)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu.reshape(-1)
        running_var *= momentum
        running_var += (1 - momentum) * var.reshape(-1)
    else:
        m = None
        mu = running_mean.reshape(bshape)
        var = running_var.reshape(bshape)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = g_ * xhat + b_

    def vjp(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * g_
        if training:
            dx = inv / m * (m * dxhat - dxhat.sum(axis=axes, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            dx = dxhat * inv
        return dx, dgamma, dbeta

    return node(out, (x, gamma, beta), vjp, "batch_norm")


# ---------------------------------------------------------------------------
# losses (each returns a scalar Tensor, mean over the batch)

def _check_finite(t: Tensor, what: str):
    if not np.all(np.isfinite(t.data)):
        raise NonFinite(f"{what}: non-finite input")


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of logsumexp(l) - l[y]."""
    _check_finite(logits, "softmax_cross_entropy")
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    picked = logits[np.arange(n), labels]
    return (logsumexp(logits, axis=1) - picked).mean()


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def bce(prob: Tensor, target, eps: float = 1e-12) -> Tensor:
    """Binary cross-entropy on probabilities, clamped to [eps, 1-eps]."""
    _check_finite(prob, "bce")
    t = np.asarray(target, dtype=np.float64).reshape(prob.shape)
    p = np.clip(prob.data, eps, 1 - eps)
    n = p.size
    out = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    return node(np.asarray(out), (prob,),
                lambda g: (g * (p - t) / (p * (1 - p)) / n,), "bce")


def mse(a: Tensor, b) -> Tensor:
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse: {a.shape} vs {b.shape}")
    d = a - b
    return (d * d).mean()
