"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the handful of ops the critic loss needs: matmul, broadcast add/mul/sub,
tanh, square, sum/mean. Graphs are built per evaluation and discarded; the
engine exists because the training loss penalizes the network's input
Jacobian, whose parameter gradient is a double-backpropagation that closed
-form layer gradients do not cover.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        other = _wrap(other)

        def bw(g, a=self, b=other):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(g, b.shape))

        return Tensor(self.value + other.value, (self, other), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = _wrap(other)

        def bw(g, a=self, b=other):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(-g, b.shape))

        return Tensor(self.value - other.value, (self, other), bw)

    def __rsub__(self, other):
        return _wrap(other) - self

    def __mul__(self, other):
        other = _wrap(other)

        def bw(g, a=self, b=other):
            _accum(a, _unbroadcast(g * b.value, a.shape))
            _accum(b, _unbroadcast(g * a.value, b.shape))

        return Tensor(self.value * other.value, (self, other), bw)

    __rmul__ = __mul__

    def __neg__(self):
        def bw(g, a=self):
            _accum(a, -g)

        return Tensor(-self.value, (self,), bw)

    def __matmul__(self, other):
        other = _wrap(other)

        def bw(g, a=self, b=other):
            av, bv = a.value, b.value
            if av.ndim == 2 and bv.ndim == 2:
                _accum(a, g @ bv.T)
                _accum(b, av.T @ g)
            elif av.ndim == 2 and bv.ndim == 1:
                _accum(a, np.outer(g, bv))
                _accum(b, av.T @ g)
            elif av.ndim == 1 and bv.ndim == 2:
                _accum(a, bv @ g)
                _accum(b, np.outer(av, g))
            else:
                _accum(a, g * bv)
                _accum(b, g * av)

        return Tensor(self.value @ other.value, (self, other), bw)

    def tanh(self):
        t = np.tanh(self.value)

        def bw(g, a=self, t=t):
            _accum(a, g * (1.0 - t * t))

        return Tensor(t, (self,), bw)

    def square(self):
        def bw(g, a=self):
            _accum(a, 2.0 * g * a.value)

        return Tensor(self.value ** 2, (self,), bw)

    def sum(self, axis=None):
        def bw(g, a=self, axis=axis):
            if axis is None:
                _accum(a, np.broadcast_to(g, a.shape).copy())
            else:
                _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

        return Tensor(self.value.sum(axis=axis), (self,), bw)

    def mean(self):
        n = self.value.size

        def bw(g, a=self, n=n):
            _accum(a, np.broadcast_to(g / n, a.shape).copy())

        return Tensor(self.value.mean(), (self,), bw)

    def backward(self):
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()

        def topo(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                topo(p)
            order.append(t)

        topo(self)
        self.grad = np.ones_like(self.value)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=float)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Sum gradient g down to the given (possibly broadcast) shape."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g
