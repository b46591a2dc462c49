"""Reverse-mode differentiation over numpy arrays.

Only the operations the trading simulator needs: arithmetic, exp/log/sqrt,
tanh/sigmoid/softplus, max/min/where/clip, matmul with bias, column stacking
and splitting, reductions, and the normal CDF. Values are numpy arrays
(typically one lane per simulated path); a Tape records nodes in execution
order and walks them backwards, so no graph sort is needed.

Every public function also accepts plain arrays or floats and then just
computes with numpy. Simulation code written against this module runs in
recording mode when handed Vars and at raw numpy speed otherwise.
"""
from __future__ import annotations

import threading

import numpy as np

from . import special


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Var:
    """One tape node: a value, an optional gradient, and a pullback."""

    __slots__ = ("value", "grad", "_parents", "_pullback")

    # opt out of numpy ufunc dispatch so `ndarray <op> Var` falls back to the
    # reflected operator instead of building an object array element-wise
    __array_ufunc__ = None

    def __init__(self, value, parents=(), pullback=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._pullback = pullback

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g: np.ndarray) -> None:
        g = _unbroadcast(np.asarray(g, dtype=float), self.value.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    # arithmetic operators; the module-level functions do the work
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


class Tape:
    """Wengert list. Nodes are appended in execution order."""

    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value) -> Var:
        """New leaf (input) node."""
        v = Var(value)
        self.nodes.append(v)
        return v

    def _emit(self, value, parents, pullback) -> Var:
        v = Var(value, parents, pullback)
        self.nodes.append(v)
        return v

    def backward(self, loss: Var, seed=None) -> None:
        """Accumulate d(loss)/d(node) into node.grad for every reachable node."""
        if seed is None:
            seed = np.ones_like(loss.value)
        loss.accumulate(seed)
        for node in reversed(self.nodes):
            if node.grad is not None and node._pullback is not None:
                node._pullback(node.grad)

    def clear_grads(self) -> None:
        for node in self.nodes:
            node.grad = None


def _tape_of(*xs) -> "Tape | None":
    for x in xs:
        if isinstance(x, Var):
            tape = getattr(_tls, "tape", None)
            if tape is None:
                raise RuntimeError("Var used outside a recording() context")
            return tape
    return None


# The active tape is set by simulation code before building a graph. Ops on
# Vars emit onto it; ops on plain arrays never touch it. Thread-local so
# worker threads can record independent graphs concurrently.
_tls = threading.local()


class recording:
    """Context manager installing the active tape for the current thread."""

    def __init__(self, tape: Tape):
        self.tape = tape
        self._prev = None

    def __enter__(self):
        self._prev = getattr(_tls, "tape", None)
        _tls.tape = self.tape
        return self.tape

    def __exit__(self, *exc):
        _tls.tape = self._prev
        return False


def value_of(x):
    """Concrete numpy value of a Var or passthrough for plain data."""
    return x.value if isinstance(x, Var) else x


def is_var(x) -> bool:
    return isinstance(x, Var)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _binary(a, b, out_value, da, db):
    """Emit a binary node. da/db map upstream grad to each parent's grad."""
    tape = _tape_of(a, b)
    if tape is None:
        return out_value
    parents = tuple(p for p in (a, b) if isinstance(p, Var))

    def pullback(g):
        if isinstance(a, Var):
            a.accumulate(da(g))
        if isinstance(b, Var):
            b.accumulate(db(g))

    return tape._emit(out_value, parents, pullback)


def _unary(a, out_value, da):
    tape = _tape_of(a)
    if tape is None:
        return out_value

    def pullback(g):
        a.accumulate(da(g))

    return tape._emit(out_value, (a,), pullback)


def add(a, b):
    av, bv = _val(a), _val(b)
    return _binary(a, b, av + bv, lambda g: g, lambda g: g)


def sub(a, b):
    av, bv = _val(a), _val(b)
    return _binary(a, b, av - bv, lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    return _binary(a, b, out, lambda g: g / bv, lambda g: -g * av / (bv * bv))


def neg(a):
    return _unary(a, -_val(a), lambda g: -g)


def power(a, p):
    if not isinstance(p, (int, float)):
        raise TypeError("power exponent must be a constant")
    av = _val(a)
    out = av ** p
    return _unary(a, out, lambda g: g * p * av ** (p - 1))


def exp(a):
    out = np.exp(_val(a))
    return _unary(a, out, lambda g: g * out)


def log(a):
    av = _val(a)
    return _unary(a, np.log(av), lambda g: g / av)


def sqrt(a):
    out = np.sqrt(_val(a))
    return _unary(a, out, lambda g: g * 0.5 / out)


def tanh(a):
    out = np.tanh(_val(a))
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def sigmoid(a):
    out = special.sigmoid(_val(a))
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def softplus(a):
    av = _val(a)
    out = special.softplus(av)
    return _unary(a, out, lambda g: g * special.sigmoid(av))


def norm_cdf(a):
    av = _val(a)
    out = special.norm_cdf(av)
    return _unary(a, out, lambda g: g * special.norm_pdf(av))


def maximum(a, b):
    """Elementwise max; at ties the gradient goes to the first argument."""
    av, bv = _val(a), _val(b)
    take_a = av >= bv
    out = np.where(take_a, av, bv)
    return _binary(a, b, out, lambda g: g * take_a, lambda g: g * ~take_a)


def minimum(a, b):
    av, bv = _val(a), _val(b)
    take_a = av <= bv
    out = np.where(take_a, av, bv)
    return _binary(a, b, out, lambda g: g * take_a, lambda g: g * ~take_a)


def relu(a):
    return maximum(a, 0.0)


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def where(cond, a, b):
    """Select by a concrete boolean mask (the mask itself is never differentiated)."""
    cond = np.asarray(value_of(cond), dtype=bool)
    av, bv = _val(a), _val(b)
    out = np.where(cond, av, bv)
    return _binary(a, b, out, lambda g: g * cond, lambda g: g * ~cond)


def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = av @ bv

    def da(g):
        return g @ bv.T

    def db(g):
        return av.T @ g

    return _binary(a, b, out, da, db)


def total(a):
    """Sum of all elements, as a scalar node."""
    av = _val(a)
    out = np.asarray(av.sum())
    return _unary(a, out, lambda g: np.broadcast_to(g, av.shape))


def mean(a):
    av = _val(a)
    n = av.size
    out = np.asarray(av.mean())
    return _unary(a, out, lambda g: np.broadcast_to(g / n, av.shape))


def stack_cols(columns):
    """Stack per-path vectors (each (M,)) into an (M, F) feature matrix."""
    vals = [_val(c) for c in columns]
    out = np.stack(vals, axis=1)
    tape = _tape_of(*columns)
    if tape is None:
        return out
    parents = tuple(c for c in columns if isinstance(c, Var))

    def pullback(g):
        for i, c in enumerate(columns):
            if isinstance(c, Var):
                c.accumulate(g[:, i])

    return tape._emit(out, parents, pullback)


def col(a, i: int):
    """Column i of an (M, F) matrix as an (M,) vector."""
    av = _val(a)
    out = av[:, i]
    if not isinstance(a, Var):
        return out

    def da(g):
        full = np.zeros_like(av)
        full[:, i] = g
        return full

    return _unary(a, out, da)


def elementwise(x, f, dfdx):
    """Custom elementwise primitive: value f(x), local derivative dfdx(x).

    Used for functions whose forward pass needs lookups that are awkward to
    compose from the ops above (the order-book depth maps); the caller
    supplies the almost-everywhere derivative.
    """
    xv = _val(x)
    out = f(xv)
    return _unary(x, out, lambda g: g * dfdx(xv))


def constant(x):
    """Explicitly mark data as non-differentiable (identity on plain arrays)."""
    return value_of(x)
