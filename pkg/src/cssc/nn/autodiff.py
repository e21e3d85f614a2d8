"""A small reverse-mode automatic differentiation tape over numpy arrays.

Every function here accepts plain arrays as well as :class:`Var` objects.
With no ``Var`` among the inputs it simply returns the numpy result, so the
same model code serves for cheap inference and for recorded training passes.

    >>> with Tape() as tape:
    ...     w = tape.variable(np.array([[2.0]]))
    ...     y = sum(tanh(w * 3.0))
    >>> gw, = tape.gradient(y, [w])
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .. import linalg

_state = threading.local()


def _active_tapes() -> list:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


class Var:
    """An array value recorded on a :class:`Tape`."""

    __array_ufunc__ = None  # make numpy defer to our reflected operators
    __slots__ = ("value", "tape", "index")

    def __init__(self, value, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    size = property(lambda self: self.value.size)
    dtype = property(lambda self: self.value.dtype)
    T = property(lambda self: swapaxes(self, -1, -2))

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __getitem__(self, idx): return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)


class Tape:
    """Records operations in execution order; reverse order is a valid
    topological order for the backward sweep."""

    def __init__(self):
        self.nodes: list = []  # (out_index, parent Vars, vjp) per recorded op
        self.size = 0

    def __enter__(self):
        _active_tapes().append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes().remove(self)
        return False

    def _new(self, value) -> Var:
        v = Var(np.asarray(value, dtype=np.float64), self, self.size)
        self.size += 1
        return v

    def variable(self, value) -> Var:
        """A leaf to differentiate with respect to."""
        return self._new(np.array(value, dtype=np.float64))

    def record(self, value, parents: Sequence, vjp: Callable) -> Var:
        out = self._new(value)
        self.nodes.append((out.index, tuple(parents), vjp))
        return out

    def gradient(self, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        """Gradient of the scalar ``output`` with respect to each of ``wrt``."""
        if not isinstance(output, Var):
            return [np.zeros_like(np.asarray(w.value)) for w in wrt]
        if output.value.size != 1:
            raise ValueError("gradient needs a scalar output")
        grads: dict[int, np.ndarray] = {output.index: np.ones_like(output.value)}
        for out_index, parents, vjp in reversed(self.nodes):
            g = grads.pop(out_index, None)
            if g is None:
                continue
            for parent, pg in zip(parents, vjp(g)):
                if pg is None or not isinstance(parent, Var):
                    continue
                prev = grads.get(parent.index)
                grads[parent.index] = pg if prev is None else prev + pg
        return [grads.get(w.index, np.zeros_like(w.value)) for w in wrt]


def value(x):
    """The numpy value behind ``x`` (identity for arrays)."""
    return x.value if isinstance(x, Var) else x


def stop_gradient(x):
    return np.array(value(x), copy=True) if isinstance(x, Var) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _shape(x):
    return np.shape(value(x))


def add(a, b):
    tape = _tape_of(a, b)
    out = value(a) + value(b)
    if tape is None:
        return out
    sa, sb = _shape(a), _shape(b)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape = _tape_of(a, b)
    out = value(a) - value(b)
    if tape is None:
        return out
    sa, sb = _shape(a), _shape(b)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    tape = _tape_of(a, b)
    va, vb = value(a), value(b)
    out = va * vb
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b),
                       lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb)))


def div(a, b):
    tape = _tape_of(a, b)
    va, vb = value(a), value(b)
    out = va / vb
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b),
                       lambda g: (_unbroadcast(g / vb, sa),
                                  _unbroadcast(-g * out / vb, sb)))


def neg(a):
    if not isinstance(a, Var):
        return -a
    return a.tape.record(-a.value, (a,), lambda g: (-g,))


def power(a, p):
    if not isinstance(a, Var):
        return a ** p
    va = a.value
    return a.tape.record(va ** p, (a,), lambda g: (g * p * va ** (p - 1),))


def square(a):
    return mul(a, a)


def matmul(a, b):
    tape = _tape_of(a, b)
    va, vb = value(a), value(b)
    out = va @ vb
    if tape is None:
        return out
    if va.ndim < 2 or vb.ndim < 2:
        raise ValueError("recorded matmul needs operands with ndim >= 2")
    sa, sb = va.shape, vb.shape

    def vjp(g):
        return (_unbroadcast(g @ np.swapaxes(vb, -1, -2), sa),
                _unbroadcast(np.swapaxes(va, -1, -2) @ g, sb))
    return tape.record(out, (a, b), vjp)


def tanh(a):
    out = np.tanh(value(a))
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    va = value(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * va))
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a):
    out = np.exp(value(a))
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, (a,), lambda g: (g * out,))


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    va = value(a)
    out = np.sum(va, axis=axis, keepdims=keepdims)
    if not isinstance(a, Var):
        return out
    shape = va.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return a.tape.record(out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    va = value(a)
    count = va.size if axis is None else np.prod([va.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    va = value(a)
    out = np.reshape(va, shape)
    if not isinstance(a, Var):
        return out
    old = va.shape
    return a.tape.record(out, (a,), lambda g: (g.reshape(old),))


def swapaxes(a, i, j):
    out = np.swapaxes(value(a), i, j)
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, (a,), lambda g: (np.swapaxes(g, i, j),))


def getitem(a, idx):
    va = value(a)
    out = va[idx]
    if not isinstance(a, Var):
        return out
    shape = va.shape
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(p is None or p is Ellipsis or isinstance(p, (int, slice, np.integer))
                for p in parts)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)
    return a.tape.record(np.array(out), (a,), vjp)


def stack(xs, axis=0):
    xs = list(xs)
    vals = [value(x) for x in xs]
    out = np.stack(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    ax = axis if axis >= 0 else axis + out.ndim
    return tape.record(out, xs, lambda g: tuple(np.take(g, i, axis=ax) for i in range(len(xs))))


def concatenate(xs, axis=0):
    xs = list(xs)
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    splits = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tape.record(out, xs, lambda g: tuple(np.split(g, splits, axis=axis)))


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    tape = _tape_of(a, b)
    va, vb = value(a), value(b)
    out = np.where(cond, va, vb)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b),
                       lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa),
                                  _unbroadcast(np.where(cond, 0.0, g), sb)))


def tridiagonal_solve(sub, diag, sup, rhs):
    """Batched ``A @ X = rhs``; differentiable in ``rhs`` only.

    ``sub``, ``diag``, ``sup`` are constant arrays with shapes ``(..., n-1)``,
    ``(..., n)``; ``rhs`` has shape ``(..., n, k)``.  The backward pass solves
    the transposed system, i.e. ``dL/drhs = A^-T dL/dX``.
    """
    out = linalg.thomas(sub, diag, sup, value(rhs))
    if not isinstance(rhs, Var):
        return out
    shape = _shape(rhs)
    return rhs.tape.record(
        out, (rhs,), lambda g: (_unbroadcast(linalg.thomas(sup, diag, sub, g), shape),))


def affine(a, w, b=None):
    """``a @ w + b`` as one recorded node (``w`` is 2-D, ``b`` 1-D or None)."""
    tape = _tape_of(a, w, b)
    va, vw = value(a), value(w)
    out = va @ vw
    if b is not None:
        out = out + value(b)
    if tape is None:
        return out

    def vjp(g):
        ga = g @ vw.T if isinstance(a, Var) else None
        gw = None
        if isinstance(w, Var):
            gw = va.reshape(-1, va.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if isinstance(b, Var) else None
        return ga, gw, gb
    return tape.record(out, (a, w, b), vjp)


def lincomb(terms, coeffs):
    """``sum(c * x for c, x in zip(coeffs, terms))`` with scalar coefficients."""
    terms = list(terms)
    tape = _tape_of(*terms)
    out = coeffs[0] * value(terms[0])
    for c, x in zip(coeffs[1:], terms[1:]):
        out = out + c * value(x)
    if tape is None:
        return out
    shapes = [np.shape(value(x)) for x in terms]
    return tape.record(out, terms, lambda g: tuple(
        _unbroadcast(c * g, s) if isinstance(x, Var) else None
        for c, s, x in zip(coeffs, shapes, terms)))
