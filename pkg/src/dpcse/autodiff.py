"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray together with the closures needed to push a
gradient back to its inputs.  The op set is intentionally small: elementwise
arithmetic, (batched) matmul, reductions, shape moves, a handful of fused
nonlinearities, and the two structured ops the network is actually hot on
(2-D convolution and depthwise 1-D convolution).  Everything is define-by-run
and single-threaded; calling ``backward()`` on a scalar walks the graph once
in reverse topological order and accumulates ``.grad`` on every leaf that has
``requires_grad`` set.

Gradients are never mutated in place, so it is safe for a vjp to hand out
views of upstream buffers.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy import special as _special

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference / oracles)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents = ()
        self._vjp = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff ------------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate gradients of ``self`` into every reachable leaf.

        ``grad`` defaults to ones, which is the usual scalar-loss case.
        Intermediate gradients are released as soon as they are consumed.
        """
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._vjp is not None:
                node._vjp(node.grad)
            if node._parents:
                # interior node: its gradient has been fully consumed
                node.grad = None
                node._vjp = None
                node._parents = ()

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, *axes)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _acc(t, g):
    # accumulate without in-place mutation (vjps may hand out views)
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b):
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        def vjp(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g, b.data.shape))
        return _make(a.data + b.data, (a, b), vjp)
    bb = np.asarray(b, dtype=a.data.dtype)

    def vjp(g):
        _acc(a, _unbroadcast(g, a.data.shape))
    return _make(a.data + bb, (a,), vjp)


def mul(a, b):
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        def vjp(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g * a.data, b.data.shape))
        return _make(a.data * b.data, (a, b), vjp)
    bb = np.asarray(b, dtype=a.data.dtype)

    def vjp(g):
        _acc(a, _unbroadcast(g * bb, a.data.shape))
    return _make(a.data * bb, (a,), vjp)


def div(a, b):
    a = as_tensor(a)
    if isinstance(b, Tensor):
        def vjp(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
        return _make(a.data / b.data, (a, b), vjp)
    return mul(a, 1.0 / np.asarray(b, dtype=a.data.dtype))


def power(a, p):
    p = float(p)

    def vjp(g):
        _acc(a, g * p * a.data ** (p - 1.0))
    return _make(a.data ** p, (a,), vjp)


def exp(a):
    y = np.exp(a.data)

    def vjp(g):
        _acc(a, g * y)
    return _make(y, (a,), vjp)


def log(a):
    def vjp(g):
        _acc(a, g / a.data)
    return _make(np.log(a.data), (a,), vjp)


def sqrt(a):
    y = np.sqrt(a.data)

    def vjp(g):
        _acc(a, g * (0.5 / y))
    return _make(y, (a,), vjp)


def absolute(a):
    # subgradient convention: sign(0) = 0
    s = np.sign(a.data)

    def vjp(g):
        _acc(a, g * s)
    return _make(np.abs(a.data), (a,), vjp)


def erf(a):
    c = np.asarray(2.0 / np.sqrt(np.pi), dtype=a.data.dtype)

    def vjp(g):
        _acc(a, g * c * np.exp(-a.data * a.data))
    return _make(_special.erf(a.data), (a,), vjp)


def sigmoid(a):
    y = _special.expit(a.data)

    def vjp(g):
        _acc(a, g * y * (1.0 - y))
    return _make(y, (a,), vjp)


# -- reductions ----------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _acc(a, np.broadcast_to(gg, a.data.shape))
    return _make(y, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.data.shape[ax]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reduce_max(a, axis, keepdims=False):
    """Max over ``axis`` (int or tuple); gradient flows to the first argmax."""
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % a.data.ndim for ax in axes)
    rest = tuple(i for i in range(a.data.ndim) if i not in axes)
    perm = rest + axes
    moved = a.data.transpose(perm)
    lead = moved.shape[: len(rest)]
    flat = moved.reshape(int(np.prod(lead, dtype=np.int64)) if lead else 1, -1)
    idx = np.argmax(flat, axis=1)
    y = flat[np.arange(flat.shape[0]), idx].reshape(lead)
    if keepdims:
        yk = np.expand_dims(y, axes) if axes else y
    inv = np.argsort(perm)

    def vjp(g):
        gg = np.asarray(g)
        if keepdims:
            gg = gg.reshape(lead)
        gflat = np.zeros_like(flat)
        gflat[np.arange(flat.shape[0]), idx] = gg.ravel()
        _acc(a, gflat.reshape(moved.shape).transpose(inv))
    out = yk if keepdims else y
    return _make(out, (a,), vjp)


# -- shape moves ----------------------------------------------------------------

def reshape(a, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.data.shape

    def vjp(g):
        _acc(a, g.reshape(old))
    return _make(a.data.reshape(shape), (a,), vjp)


def transpose(a, *axes):
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if not axes:
        axes = tuple(reversed(range(a.data.ndim)))
    inv = tuple(np.argsort(axes))

    def vjp(g):
        _acc(a, g.transpose(inv))
    return _make(a.data.transpose(axes), (a,), vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                _acc(t, p)
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def narrow(a, axis, start, length):
    """Slice ``length`` entries from ``start`` along ``axis``."""
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def vjp(g):
        gg = np.zeros_like(a.data)
        gg[sl] = g
        _acc(a, gg)
    return _make(a.data[sl], (a,), vjp)


# -- matmul ---------------------------------------------------------------------

def _swap_last(x):
    return np.swapaxes(x, -1, -2)


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)

    def vjp(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(np.matmul(g, _swap_last(b.data)), a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(np.matmul(_swap_last(a.data), g), b.data.shape))
    return _make(np.matmul(a.data, b.data), (a, b), vjp)


# -- fused nonlinearities ----------------------------------------------------------

def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _acc(a, y * (g - dot))
    return _make(y, (a,), vjp)


def layer_norm(x, gain, bias, axis, eps=1e-5):
    """Normalize ``x`` to zero mean / unit variance along ``axis``, then affine.

    ``gain``/``bias`` are 1-D over the normalized extent and broadcast along
    every other axis.
    """
    ax = axis % x.data.ndim
    n = x.data.shape[ax]
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise ValueError(
            f"layer_norm affine shape {gain.data.shape} does not match extent {n}")
    bshape = [1] * x.data.ndim
    bshape[ax] = n
    gm = gain.data.reshape(bshape)
    bm = bias.data.reshape(bshape)
    mean = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mean
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = xc * inv
    y = gm * xhat + bm
    red = tuple(i for i in range(x.data.ndim) if i != ax)

    def vjp(g):
        if gain.requires_grad:
            _acc(gain, (g * xhat).sum(axis=red))
        if bias.requires_grad:
            _acc(bias, g.sum(axis=red))
        if x.requires_grad:
            gx_hat = g * gm
            m1 = gx_hat.mean(axis=ax, keepdims=True)
            m2 = (gx_hat * xhat).mean(axis=ax, keepdims=True)
            _acc(x, inv * (gx_hat - m1 - xhat * m2))
    return _make(y, (x, gain, bias), vjp)


# -- structured convolutions ----------------------------------------------------

def conv2d(x, w, b, dilation=(1, 1)):
    """Same-size 2-D cross-correlation with zero padding.

    ``x``: (C, T, F); ``w``: (O, C, kt, kf) with odd kernel dims;
    ``b``: (O,); ``dilation``: (dt, df).  Output is (O, T, F).
    """
    C, T, F = x.data.shape
    O, Cw, kt, kf = w.data.shape
    dt, df = dilation
    if Cw != C:
        raise ValueError(f"conv2d channel mismatch: input has {C}, weight expects {Cw}")
    if kt % 2 == 0 or kf % 2 == 0:
        raise ValueError(f"conv2d kernel dims must be odd, got ({kt}, {kf})")
    pt, pf = (kt - 1) // 2 * dt, (kf - 1) // 2 * df
    if kt == 1 and kf == 1:
        y = (np.matmul(w.data.reshape(O, C), x.data.reshape(C, T * F))
             + b.data[:, None]).reshape(O, T, F)

        def vjp(g):
            gm = g.reshape(O, T * F)
            if w.requires_grad:
                _acc(w, np.matmul(gm, x.data.reshape(C, T * F).T).reshape(O, C, 1, 1))
            if b.requires_grad:
                _acc(b, gm.sum(axis=1))
            if x.requires_grad:
                _acc(x, np.matmul(w.data.reshape(O, C).T, gm).reshape(C, T, F))
        return _make(y, (x, w, b), vjp)

    # One padded copy; taps become a strided window view so both passes run
    # as single large matmuls over a (C*kt*kf, T*F) column matrix.
    xp = np.pad(x.data, ((0, 0), (pt, pt), (pf, pf)))
    K = C * kt * kf

    def columns():
        sc, st, sf = xp.strides
        win = np.lib.stride_tricks.as_strided(
            xp, shape=(C, kt, kf, T, F),
            strides=(sc, st * dt, sf * df, st, sf), writeable=False)
        return win.reshape(K, T * F)  # copies into contiguous layout

    col = columns()
    y = (np.matmul(w.data.reshape(O, K), col)
         + b.data[:, None]).reshape(O, T, F)
    del col  # rebuilt on demand in the backward pass; keeps the tape lean

    def vjp(g):
        gm = g.reshape(O, T * F)
        if b.requires_grad:
            _acc(b, gm.sum(axis=1))
        if w.requires_grad:
            _acc(w, np.matmul(gm, columns().T).reshape(O, C, kt, kf))
        if x.requires_grad:
            gcol = np.matmul(w.data.reshape(O, K).T, gm)
            gcol = gcol.reshape(C, kt, kf, T, F)
            gxp = np.zeros_like(xp)
            for i in range(kt):
                for j in range(kf):
                    gxp[:, i * dt:i * dt + T, j * df:j * df + F] += gcol[:, i, j]
            _acc(x, gxp[:, pt:pt + T, pf:pf + F])
    return _make(y, (x, w, b), vjp)


def depthwise_conv1d(x, w, b):
    """Per-channel same-padding 1-D convolution along the middle axis.

    ``x``: (B, L, D); ``w``: (k, D) with k odd; ``b``: (D,).
    """
    B, L, D = x.data.shape
    k, Dw = w.data.shape
    if Dw != D:
        raise ValueError(f"depthwise_conv1d channel mismatch: {D} vs {Dw}")
    if k % 2 == 0:
        raise ValueError(f"depthwise_conv1d kernel must be odd, got {k}")
    p = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (0, 0)))
    y = np.broadcast_to(b.data, (B, L, D)).copy()
    for j in range(k):
        y += xp[:, j:j + L, :] * w.data[j]

    def vjp(g):
        if b.requires_grad:
            _acc(b, g.sum(axis=(0, 1)))
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for j in range(k):
                gw[j] = (xp[:, j:j + L, :] * g).sum(axis=(0, 1))
            _acc(w, gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j:j + L, :] += g * w.data[j]
            _acc(x, gxp[:, p:p + L, :])
    return _make(y, (x, w, b), vjp)
