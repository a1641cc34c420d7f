"""A small reverse-mode autodiff engine over numpy arrays.

Every op builds a node holding its parents and a closure that maps the
output gradient to one gradient per parent.  ``Tensor.backward`` walks the
graph in reverse topological order and accumulates into leaf ``.grad``
arrays, so several scalar losses can be back-propagated through one shared
forward graph.

Complex tensors are supported for the spectral ops.  Their gradient is
stored as ``dL/dRe + 1j * dL/dIm``.
"""
from __future__ import annotations

import numpy as np

from .. import dsp
from ..errors import NonFinite, NotScalar, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _grad_fn=None):
        data = np.asarray(data)
        data = data.astype(np.complex128 if np.iscomplexobj(data) else np.float64, copy=False)
        if not np.all(np.isfinite(data)):
            raise NonFinite(f"non-finite values produced{' in ' + name if name else ''}")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._grad_fn = _grad_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.data.real.reshape(-1)[0]) if self.data.size == 1 else self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        if self.data.size != 1:
            raise NotScalar(f"backward needs a scalar loss, got shape {self.shape}")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __neg__ = lambda self: scale(self, -1.0)
    __matmul__ = lambda self, other: matmul(self, other)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, grad_fn):
    return Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                  _parents=tuple(parents), _grad_fn=grad_fn)


def _unbroadcast(g, shape, like):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    if not np.iscomplexobj(like):
        g = g.real
    return g


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    return _node(a.data + b.data, (a, b), lambda g: (
        _unbroadcast(g, a.shape, a.data), _unbroadcast(g, b.shape, b.data)))


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    return _node(a.data - b.data, (a, b), lambda g: (
        _unbroadcast(g, a.shape, a.data), _unbroadcast(-g, b.shape, b.data)))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    return _node(a.data * b.data, (a, b), lambda g: (
        _unbroadcast(g * np.conj(b.data), a.shape, a.data),
        _unbroadcast(g * np.conj(a.data), b.shape, b.data)))


def scale(a, c: float):
    a = _wrap(a)
    return _node(a.data * c, (a,), lambda g: (g * c,))


def square(a):
    a = _wrap(a)
    return _node(a.data ** 2, (a,), lambda g: (2.0 * a.data * g,))


def absolute(a):
    a = _wrap(a)
    return _node(np.abs(a.data), (a,), lambda g: (np.sign(a.data) * g,))


def abs2(z):
    """|z|^2 of a complex (or real) tensor, as a real tensor."""
    z = _wrap(z)
    return _node(z.data.real ** 2 + z.data.imag ** 2, (z,), lambda g: (2.0 * g * z.data,))


def power(a, p: float):
    """``a ** p`` for strictly positive ``a``."""
    a = _wrap(a)
    if np.any(a.data <= 0):
        raise ValueError("power() needs strictly positive input")
    out = a.data ** p
    return _node(out, (a,), lambda g: (g * p * out / a.data,))


def sigmoid(a):
    a = _wrap(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    a = _wrap(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out ** 2),))


def sum(a, axis=None):
    a = _wrap(a)
    out = a.data.sum(axis=axis)

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _node(out, (a,), grad_fn)


def mean(a, axis=None):
    a = _wrap(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis), 1.0 / count)


def reshape(a, shape):
    a = _wrap(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def avgpool(a, factor: int, axis: int):
    """Non-overlapping mean pooling along one axis; a trailing remainder is dropped."""
    a = _wrap(a)
    axis = axis % a.data.ndim
    n = a.shape[axis] // factor
    kept = np.take(a.data, np.arange(n * factor), axis=axis)
    split = a.shape[:axis] + (n, factor) + a.shape[axis + 1:]
    out = kept.reshape(split).mean(axis=axis + 1)

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        rep = np.repeat(g, factor, axis=axis) / factor
        idx = [slice(None)] * a.data.ndim
        idx[axis] = slice(0, n * factor)
        full[tuple(idx)] = rep
        return (full,)
    return _node(out, (a,), grad_fn)


def matmul(a, b):
    """``a @ b`` with ``b`` 2-D; ``a`` may carry leading batch dims."""
    a, b = _wrap(a), _wrap(b)
    if b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"cannot matmul {a.shape} by {b.shape}")
    k, m = b.shape

    def grad_fn(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
        return ga, gb
    return _node(a.data @ b.data, (a, b), grad_fn)


def conv2d(x, w, b=None):
    """Stride-1 'same' convolution (cross-correlation) in NHWC layout.

    ``x``: [batch, H, W, Cin]; ``w``: [k, k, Cin, Cout] with odd k; ``b``: [Cout].
    Images are zero-padded and flattened row-major, so every kernel offset is a
    contiguous slice and the whole conv is k*k matmuls.  Outputs computed in
    the padding columns are discarded.
    """
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
        raise ShapeMismatch(f"bad conv2d operands {x.shape} * {w.shape}")
    if w.shape[2] != x.shape[3]:
        raise ShapeMismatch(f"conv2d expects {w.shape[2]} input channels, got {x.shape[3]}")
    bs, h, wd, cin = x.shape
    k, cout = w.shape[0], w.shape[3]
    p = k // 2
    hp, wp = h + 2 * p, wd + 2 * p
    rows = bs * hp * wp
    extra = (k - 1) * wp + (k - 1)
    flat = np.zeros((rows + extra, cin))
    flat[:rows].reshape(bs, hp, wp, cin)[:, p:p + h, p:p + wd] = x.data
    acc = np.zeros((rows, cout))
    for i in range(k):
        for j in range(k):
            o = i * wp + j
            acc += flat[o:o + rows] @ w.data[i, j]
    out = np.ascontiguousarray(acc.reshape(bs, hp, wp, cout)[:, :h, :wd])
    parents = (x, w) if b is None else (x, w, _wrap(b))
    if b is not None:
        out += parents[2].data

    def grad_fn(g):
        d = np.zeros((rows, cout))
        d.reshape(bs, hp, wp, cout)[:, :h, :wd] = g
        gw = np.empty_like(w.data) if w.requires_grad else None
        gflat = np.zeros_like(flat) if x.requires_grad else None
        for i in range(k):
            for j in range(k):
                o = i * wp + j
                if gw is not None:
                    gw[i, j] = flat[o:o + rows].T @ d
                if gflat is not None:
                    gflat[o:o + rows] += d @ w.data[i, j].T
        gx = None
        if gflat is not None:
            gx = gflat[:rows].reshape(bs, hp, wp, cin)[:, p:p + h, p:p + wd].copy()
        grads = (gx, gw)
        if b is not None:
            grads += (g.sum(axis=(0, 1, 2)),)
        return grads
    return _node(out, parents, grad_fn)


def stft(x, params: dsp.StftParams):
    """Differentiable STFT: real [..., L] -> complex [..., frames, bins]."""
    x = _wrap(x)
    length = x.shape[-1]
    return _node(dsp.analysis(x.data, params), (x,),
                 lambda g: (dsp.analysis_adjoint(g, params, length),))


def istft(z, params: dsp.StftParams, length: int):
    """Differentiable iSTFT: complex [..., frames, bins] -> real [..., length]."""
    z = _wrap(z)
    return _node(dsp.synthesis(z.data, params, length), (z,),
                 lambda g: (dsp.synthesis_adjoint(g, params, length),))
