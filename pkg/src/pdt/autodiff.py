"""Reverse-mode automatic differentiation over dense float32 arrays.

A :class:`Tape` records operations in execution order; :func:`backward`
replays the records in reverse to accumulate gradients into leaf tensors.
Storage is float32 throughout; reductions and normalization statistics
accumulate in float64 before casting back.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_LOG2PI = math.log(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op's rules."""

    def __init__(self, op, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class DomainError(ValueError):
    """Raised when an op is evaluated outside its mathematical domain."""


_debug_checks = False


def set_debug_checks(enabled):
    """Enable NaN/Inf checking after every forward op (slow; for tests)."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """Dense float32 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_rec", "_tape")

    def __init__(self, data, requires_grad=False):
        # np.ascontiguousarray would promote 0-d scalars to 1-d; keep them 0-d.
        arr = np.asarray(data, dtype=np.float32)
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = requires_grad
        self._rec = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return self._rec is None

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all defined in terms of the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


class _Record:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered operation log; use as a context manager around a forward pass."""

    def __init__(self):
        self.records = []
        self._prev = None

    def __enter__(self):
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False


_active_tape = None
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32))


def _make(out_data, inputs, backward_fn):
    """Wrap a forward result, recording it on the active tape when needed."""
    if _debug_checks and not np.all(np.isfinite(out_data)):
        raise FloatingPointError("non-finite values produced by a forward op")
    out = Tensor(out_data)
    if _grad_enabled and _active_tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        rec = _Record(out, inputs, backward_fn)
        out._rec = rec
        out._tape = _active_tape
        _active_tape.records.append(rec)
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of trailing-dimension broadcast)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.astype(np.float32, copy=False)


def backward(loss):
    """Populate gradients of every leaf reachable from `loss`.

    Gradients accumulate across calls until explicitly zeroed.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("backward requires a scalar Tensor loss")
    tape = loss._tape
    if tape is None or not tape.records:
        raise ValueError("loss was not recorded on a tape (nothing to differentiate)")
    flows = {id(loss): np.ones_like(loss.data)}
    stop = tape.records.index(loss._rec)
    for rec in reversed(tape.records[: stop + 1]):
        g = flows.pop(id(rec.out), None)
        if g is None:
            continue
        grads = rec.backward_fn(g)
        for inp, gi in zip(rec.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp._rec is None:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gi.astype(np.float32, copy=False)
            else:
                key = id(inp)
                if key in flows:
                    flows[key] = flows[key] + gi
                else:
                    flows[key] = gi


# ---------------------------------------------------------------------------
# elementwise / broadcasting ops


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError("sub", a.shape, b.shape) from None
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bwd)


def relu(x):
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)
    return _make(out, (x,), lambda g: (g * (out > 0),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh-approximation GELU."""
    x = _as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def bwd(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        dt = (1.0 - t**2) * dinner
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return _make(out, (x,), bwd)


def tanh(x):
    x = _as_tensor(x)
    t = np.tanh(x.data)
    return _make(t, (x,), lambda g: (g * (1.0 - t**2),))


def exp(x):
    x = _as_tensor(x)
    e = np.exp(x.data)
    return _make(e, (x,), lambda g: (g * e,))


def log(x):
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log of non-positive value")
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp(x, lo, hi):
    """Hard clamp; gradient is passed through only inside [lo, hi]."""
    x = _as_tensor(x)
    out = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(out, (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# linear algebra / structural ops


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), bwd)


def transpose(x, axes):
    x = _as_tensor(x)
    inv = np.argsort(axes)
    return _make(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))


def reshape(x, shape):
    x = _as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def slice_(x, key):
    """Basic/fancy indexing. Fancy integer indices must not repeat
    (embed_lookup handles the duplicate-index case)."""
    x = _as_tensor(x)

    def bwd(g):
        full = np.zeros_like(x.data)
        full[key] += g
        return (full,)

    return _make(x.data[key].copy(), (x,), bwd)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def embed_lookup(table, indices):
    """Row gather from a 2-D table; scatter-add on the backward pass."""
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError("embed_lookup", table.shape)
    if np.any(idx < 0) or np.any(idx >= table.shape[0]):
        raise DomainError("embed_lookup index out of range")

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(table.data[idx], (table,), bwd)


# ---------------------------------------------------------------------------
# reductions / normalization


def sum_(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(np.float32)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).copy(),)

    return _make(out, (x,), bwd)


def mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(np.float32)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, x.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, x.shape).copy(),)

    return _make(out, (x,), bwd)


def softmax_lastdim(x):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    # f64 denominator: keeps the row sum independent of summation order at f32.
    y = (e / e.sum(axis=-1, keepdims=True, dtype=np.float64)).astype(np.float32)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _make(y, (x,), bwd)


def layer_norm(x, eps=1e-5):
    """Normalize the last dimension to zero mean / unit variance (pre-affine).

    Constant inputs map to zeros. Statistics accumulate in float64.
    """
    x = _as_tensor(x)
    v = x.data
    # Statistics accumulate in float64 without materializing a full f64 copy.
    mu = v.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = np.square(v, dtype=np.float64).mean(axis=-1, keepdims=True) - mu**2
    inv = (1.0 / np.sqrt(np.maximum(var, 0.0) + eps)).astype(np.float32)
    xhat = (v - mu.astype(np.float32)) * inv

    def bwd(g):
        gmean = g.mean(axis=-1, keepdims=True, dtype=np.float64).astype(np.float32)
        proj = (g * xhat).mean(axis=-1, keepdims=True, dtype=np.float64).astype(np.float32)
        return (inv * (g - gmean - xhat * proj),)

    return _make(xhat, (x,), bwd)
