"""Second-order forward-mode automatic differentiation.

A :class:`Jet` carries a value together with its exact gradient and Hessian
with respect to a fixed set of seed variables. All three are numpy arrays and
broadcast over leading batch dimensions, so one pass evaluates a function and
its first two derivatives at many points at once.

>>> x, y = variables(np.array([1.0, 2.0]))
>>> j = x * x * y
>>> float(j.value), j.grad.tolist()
(2.0, [4.0, 1.0])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Jet",
    "variables",
    "derivatives",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "tanh",
]


class Jet:
    """Truncated second-order Taylor expansion of a scalar function."""

    __slots__ = ("value", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, value, grad, hess):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        value = np.asarray(other, dtype=float)
        n = self.nvars
        return Jet(
            value,
            np.zeros(value.shape + (n,)),
            np.zeros(value.shape + (n, n)),
        )

    def _chain(self, f0, f1, f2) -> "Jet":
        # g(a): g' grad a, g'' grad a grad a^T + g' hess a
        g = self.grad
        return Jet(
            f0,
            f1[..., None] * g,
            f2[..., None, None] * (g[..., :, None] * g[..., None, :])
            + f1[..., None, None] * self.hess,
        )

    def __add__(self, other) -> "Jet":
        o = self._lift(other)
        return Jet(self.value + o.value, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.value, -self.grad, -self.hess)

    def __sub__(self, other) -> "Jet":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Jet":
        return self._lift(other) - self

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.value * c, self.grad * c[..., None], self.hess * c[..., None, None])
        a, b = self, other
        ga, gb = a.grad, b.grad
        cross = ga[..., :, None] * gb[..., None, :]
        return Jet(
            a.value * b.value,
            a.value[..., None] * gb + b.value[..., None] * ga,
            a.value[..., None, None] * b.hess
            + b.value[..., None, None] * a.hess
            + cross
            + np.swapaxes(cross, -1, -2),
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.value
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def __pow__(self, k) -> "Jet":
        if isinstance(k, Jet):
            return exp(k * log(self))
        k = float(k)
        if k == 2.0:
            return self * self
        v = self.value
        return self._chain(v**k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))

    def __repr__(self) -> str:
        return f"Jet(value={self.value!r})"


def variables(x) -> list[Jet]:
    """Seed one jet per trailing component of ``x`` (shape ``(..., n)``)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    batch = x.shape[:-1]
    eye = np.eye(n)
    zero_h = np.zeros(batch + (n, n))
    return [Jet(x[..., i], np.broadcast_to(eye[i], batch + (n,)), zero_h) for i in range(n)]


def derivatives(fn: Callable[[Sequence[Jet]], Jet], x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of ``fn`` at ``x`` (shape ``(..., n)``)."""
    x = np.asarray(x, dtype=float)
    out = fn(variables(x))
    if not isinstance(out, Jet):
        # constant function
        n = x.shape[-1]
        value = np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()
        return value, np.zeros(x.shape), np.zeros(x.shape + (n,))
    value = np.broadcast_to(out.value, x.shape[:-1]).copy()
    grad = np.broadcast_to(out.grad, x.shape).copy()
    hess = np.broadcast_to(out.hess, x.shape + (x.shape[-1],)).copy()
    return value, grad, hess


def _unary(a, f0, f1, f2, np_fn):
    if isinstance(a, Jet):
        return a._chain(f0(a.value), f1(a.value), f2(a.value))
    return np_fn(a)


def sqrt(a):
    return _unary(
        a,
        np.sqrt,
        lambda v: 0.5 / np.sqrt(v),
        lambda v: -0.25 / (v * np.sqrt(v)),
        np.sqrt,
    )


def exp(a):
    return _unary(a, np.exp, np.exp, np.exp, np.exp)


def log(a):
    return _unary(a, np.log, lambda v: 1.0 / v, lambda v: -1.0 / v**2, np.log)


def sin(a):
    return _unary(a, np.sin, np.cos, lambda v: -np.sin(v), np.sin)


def cos(a):
    return _unary(a, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v), np.cos)


def tanh(a):
    def d1(v):
        return 1.0 - np.tanh(v) ** 2

    def d2(v):
        t = np.tanh(v)
        return -2.0 * t * (1.0 - t**2)

    return _unary(a, np.tanh, d1, d2, np.tanh)
