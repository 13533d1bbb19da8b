"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap contiguous float64 numpy arrays. Every differentiable op
records its parents and a backward closure; Tensor.backward() replays the
tape in exact reverse execution order and accumulates gradients
additively, so a parameter used twice receives the sum of both path
gradients. Only the ops the decoder needs are implemented (no general
broadcasting beyond what those ops require).
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import erf

from . import kernels


class ShapeError(ValueError):
    """Raised when operand shapes violate an op's contract."""


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# global forward-execution counter; backward sorts by it in reverse
_op_counter = itertools.count()

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (eval / FD loops)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_order")

    def __init__(self, data, requires_grad=False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._order = next(_op_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed=None):
        """Reverse-mode sweep from this tensor.

        `seed` defaults to ones; for the scalar-loss case that is the
        usual dLoss/dLoss = 1.
        """
        if seed is None:
            seed = np.ones_like(self.data)
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._order, reverse=True)
        self._accumulate(np.asarray(seed, dtype=np.float64))
        for t in nodes:
            if t._backward_fn is not None and t.grad is not None:
                t._backward_fn(t.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(astensor(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def astensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise / linear algebra ------------------------------------------


def add(a, b):
    a, b = astensor(a), astensor(b)
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), bwd)


def mul(a, b):
    a, b = astensor(a), astensor(b)
    data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bwd)


def scale(a, s):
    a = astensor(a)
    s = float(s)

    def bwd(g):
        a._accumulate(g * s)

    return _make(a.data * s, (a,), bwd)


def square(a):
    a = astensor(a)

    def bwd(g):
        a._accumulate(g * 2.0 * a.data)

    return _make(a.data * a.data, (a,), bwd)


def matmul(a, b):
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), bwd)


def reshape(a, shape):
    a = astensor(a)
    data = a.data.reshape(shape)

    def bwd(g):
        a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), bwd)


def transpose(a, axes):
    a = astensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    data = np.ascontiguousarray(np.transpose(a.data, axes))

    def bwd(g):
        a._accumulate(np.transpose(g, inv))

    return _make(data, (a,), bwd)


def concat(tensors, axis):
    tensors = [astensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(data, tensors, bwd)


def reduce_sum(a, axis=None, keepdims=False):
    a = astensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(data, (a,), bwd)


def reduce_mean(a, axis=None, keepdims=False):
    a = astensor(a)
    n = a.size if axis is None else np.prod(
        [a.shape[i] for i in np.atleast_1d(axis)])
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape) / n)

    return _make(data, (a,), bwd)


# -- activations ------------------------------------------------------------


def gelu(a):
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    a = astensor(a)
    x = a.data
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    data = x * phi

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a._accumulate(g * (phi + x * pdf))

    return _make(data, (a,), bwd)


def elu(a, alpha=1.0):
    a = astensor(a)
    x = a.data
    neg = np.expm1(np.minimum(x, 0.0)) * alpha
    data = np.where(x > 0, x, neg)

    def bwd(g):
        a._accumulate(g * np.where(x > 0, 1.0, neg + alpha))

    return _make(data, (a,), bwd)


def tanh(a):
    a = astensor(a)
    t = np.tanh(a.data)

    def bwd(g):
        a._accumulate(g * (1.0 - t * t))

    return _make(t, (a,), bwd)


def activation(a, kind):
    if kind == "gelu":
        return gelu(a)
    if kind == "elu":
        return elu(a)
    if kind == "tanh":
        return tanh(a)
    raise ValueError(f"unknown activation kind: {kind!r}")


def softmax(a, axis):
    a = astensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        a._accumulate((g - dot) * s)

    return _make(s, (a,), bwd)


def dropout(a, p, rng):
    """Inverted dropout: scales by 1/q at train time so eval is identity."""
    a = astensor(a)
    if p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    q = 1.0 - p
    mask = (rng.random(a.shape) < q) / q

    def bwd(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), bwd)


# -- structured ops ----------------------------------------------------------


def avgpool1d(a, window):
    """Non-overlapping mean pooling along the last axis; remainder dropped."""
    a = astensor(a)
    if window < 1:
        raise ValueError(f"pooling window must be >= 1, got {window}")
    T = a.shape[-1]
    if T < window:
        raise ShapeError(f"pooling window {window} exceeds length {T}")
    P = T // window
    T_use = P * window
    lead = a.shape[:-1]
    data = a.data[..., :T_use].reshape(lead + (P, window)).mean(axis=-1)

    def bwd(g):
        gx = np.zeros_like(a.data)
        gx[..., :T_use] = np.repeat(g / window, window, axis=-1)
        a._accumulate(gx)

    return _make(data, (a,), bwd)


def sliding_mean(x, k):
    """Means of the k sliding windows of length T-k+1 along the last axis.

    s[..., j] = mean(x[..., j:j+T-k+1]). A length-k correlation followed
    by a global average over valid positions equals the kernel dotted
    with this output, which is how the spatial patch embedding avoids the
    full convolution.
    """
    x = astensor(x)
    T = x.shape[-1]
    if not 1 <= k <= T:
        raise ShapeError(f"window count {k} out of range for length {T}")
    L = T - k + 1
    cs = np.cumsum(x.data, axis=-1)
    tot = cs[..., L - 1:T] - np.concatenate(
        [np.zeros(x.shape[:-1] + (1,)), cs[..., :k - 1]], axis=-1)
    data = tot / L

    def bwd(g):
        gx = np.zeros_like(x.data)
        for j in range(k):
            gx[..., j:j + L] += g[..., j:j + 1] / L
        x._accumulate(gx)

    return _make(data, (x,), bwd)


def conv1d_grouped(x, w, bias=None, stride=1, padding=0, groups=1):
    """Grouped 1D cross-correlation over (B, Cin, T) inputs.

    w has shape (Cout, Cin/groups, K). `padding` is an int (symmetric) or
    a (left, right) pair. Output length is
    floor((T + left + right - K)/stride) + 1.
    """
    x, w = astensor(x), astensor(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(
            f"conv1d expects 3-D input and weight, got {x.shape} and {w.shape}")
    B, Cin, T = x.shape
    Cout, cg, K = w.shape
    pl, pr = (padding, padding) if isinstance(padding, int) else padding
    if Cin % groups != 0 or Cout % groups != 0:
        raise ShapeError(
            f"channels not divisible by groups: Cin={Cin}, Cout={Cout}, "
            f"groups={groups}")
    if cg != Cin // groups:
        raise ShapeError(
            f"weight shape {w.shape} inconsistent with Cin={Cin}, "
            f"groups={groups}")
    if K > T + pl + pr:
        raise ShapeError(
            f"kernel size {K} exceeds padded length {T + pl + pr}")
    if bias is not None:
        bias = astensor(bias)
        if bias.shape != (Cout,):
            raise ShapeError(f"bias shape {bias.shape} != ({Cout},)")

    if pl or pr:
        xp = np.zeros((B, Cin, T + pl + pr))
        xp[:, :, pl:pl + T] = x.data
    else:
        xp = x.data
    y = kernels.conv1d_forward(xp, w.data, stride, groups)
    if bias is not None:
        y = y + bias.data[None, :, None]
    parents = (x, w) if bias is None else (x, w, bias)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            gxp = kernels.conv1d_backward_x(g, w.data, stride, groups,
                                            T + pl + pr)
            x._accumulate(gxp[:, :, pl:pl + T] if (pl or pr) else gxp)
        if w.requires_grad:
            w._accumulate(
                kernels.conv1d_backward_w(g, xp, stride, groups, K))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))

    return _make(y, parents, bwd)


class BatchNormState:
    """Running statistics for one batchnorm layer (not trainable)."""

    def __init__(self, n_features):
        self.mean = np.zeros(n_features)
        self.var = np.ones(n_features)

    def copy(self):
        out = BatchNormState(len(self.mean))
        out.mean = self.mean.copy()
        out.var = self.var.copy()
        return out


def batchnorm1d(x, gamma, beta, state, training, eps=1e-5, momentum=0.1):
    """Per-feature normalization of (B, F, T) over the (B, T) axes."""
    x, gamma, beta = astensor(x), astensor(gamma), astensor(beta)
    if x.ndim != 3:
        raise ShapeError(f"batchnorm1d expects (B, F, T), got {x.shape}")
    B, F, T = x.shape
    if training:
        if B * T < 2:
            raise ShapeError(
                f"batchnorm needs B*T >= 2 in train mode, got B={B}, T={T}")
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        state.mean += momentum * (mu - state.mean)
        state.var += momentum * (var - state.var)
    else:
        mu = state.mean
        var = state.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None]) * inv_std[None, :, None]
    data = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def bwd(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None]
            if training:
                m1 = gxhat.mean(axis=(0, 2), keepdims=True)
                m2 = (gxhat * xhat).mean(axis=(0, 2), keepdims=True)
                gx = (gxhat - m1 - xhat * m2) * inv_std[None, :, None]
            else:
                gx = gxhat * inv_std[None, :, None]
            x._accumulate(gx)

    return _make(data, (x, gamma, beta), bwd)


def layernorm(x, gamma, beta, eps=1e-5):
    """Normalization over the last axis with affine parameters."""
    x, gamma, beta = astensor(x), astensor(gamma), astensor(beta)
    D = x.shape[-1]
    if gamma.shape != (D,) or beta.shape != (D,):
        raise ShapeError(
            f"layernorm affine shapes {gamma.shape}/{beta.shape} != ({D},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    data = gamma.data * xhat + beta.data

    def bwd(g):
        if gamma.requires_grad:
            gamma._accumulate(
                (g * xhat).sum(axis=tuple(range(x.ndim - 1))))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=tuple(range(x.ndim - 1))))
        if x.requires_grad:
            gxhat = g * gamma.data
            m1 = gxhat.mean(axis=-1, keepdims=True)
            m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((gxhat - m1 - xhat * m2) * inv_std)

    return _make(data, (x, gamma, beta), bwd)


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = astensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (B, Nc) logits, got {logits.shape}")
    labels = np.asarray(labels)
    B, Nc = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"labels shape {labels.shape} != ({B},)")
    if labels.min() < 0 or labels.max() >= Nc:
        raise ValueError(
            f"labels must lie in [0, {Nc}), got range "
            f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(B), labels]))
    probs = np.exp(z - lse[:, None])

    def bwd(g):
        gx = probs.copy()
        gx[np.arange(B), labels] -= 1.0
        logits._accumulate(gx * (float(np.asarray(g).reshape(())) / B))

    return _make(np.float64(loss), (logits,), bwd)
