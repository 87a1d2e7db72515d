"""Forward-mode automatic differentiation on dual scalars.

A :class:`Dual` carries a value and a vector of partial derivatives with
respect to the seed directions. Arithmetic propagates derivatives by the
product/quotient/chain rules; the elementary functions below dispatch on the
argument type so the same model code runs on plain floats and on duals.
Nesting duals inside duals yields second derivatives (used for Hessians).

Branching on comparisons uses the primal value, so a function evaluated at a
non-differentiable point returns the derivative of the branch actually taken.
``fabs`` uses subgradient 0 at 0.
"""

from __future__ import annotations

import math

import numpy as np


class Dual:
    """Scalar with an attached derivative vector (forward-mode AD)."""

    __slots__ = ("val", "eps")

    def __init__(self, val, eps):
        self.val = val
        self.eps = eps

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.eps - other.eps)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(self.val - other, self.eps)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(other - self.val, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.eps * other.val + other.eps * self.val)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(self.val * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv,
                        (self.eps - other.eps * (self.val * inv)) * inv)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(self.val / other, self.eps / other)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        inv = 1.0 / self.val
        return Dual(other * inv, self.eps * (-other * inv * inv))

    def __pow__(self, p):
        if isinstance(p, Dual):
            # a**b = exp(b log a); requires a > 0
            return exp(p * log(self))
        if p == 0:
            return Dual(self.val ** 0, self.eps * 0.0)
        return Dual(self.val ** p, self.eps * (p * self.val ** (p - 1)))

    def __rpow__(self, base):
        return exp(self * math.log(base))

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __pos__(self):
        return self

    def __abs__(self):
        return fabs(self)

    # -- comparisons (on the primal value) -------------------------------
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    def __eq__(self, other):
        return self.val == _value(other)

    def __ne__(self, other):
        return self.val != _value(other)

    def __hash__(self):
        return hash(("Dual", id(self)))

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"


def _value(x):
    return x.val if isinstance(x, Dual) else x


def value(x):
    """Primal value of a (possibly nested) dual or plain scalar."""
    while isinstance(x, Dual):
        x = x.val
    return float(x)


def derivatives(x, n):
    """Derivative vector of a scalar w.r.t. ``n`` seeds (zeros if plain)."""
    if isinstance(x, Dual):
        return x.eps
    return np.zeros(n)


def seed(x, i, n):
    """Dual for coordinate ``i`` of an ``n``-dimensional seed basis."""
    e = np.zeros(n)
    e[i] = 1.0
    return Dual(x, e)


def stack(*entries):
    """Stack scalars into a vector, using object dtype when duals are present."""
    if any(isinstance(e, Dual) for e in entries):
        out = np.empty(len(entries), dtype=object)
        for i, e in enumerate(entries):
            out[i] = e
        return out
    return np.array(entries, dtype=float)


# -- elementary functions -------------------------------------------------

def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.val), cos(x.val) * x.eps)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.val), -sin(x.val) * x.eps)
    return math.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, e * x.eps)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.val), x.eps / x.val)
    return math.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.val)
        return Dual(r, x.eps / (2.0 * r))
    return math.sqrt(x)


def tanh(x):
    if isinstance(x, Dual):
        th = tanh(x.val)
        return Dual(th, (1.0 - th * th) * x.eps)
    return math.tanh(x)


def fabs(x):
    if isinstance(x, Dual):
        s = 1.0 if x.val > 0 else (-1.0 if x.val < 0 else 0.0)
        return Dual(fabs(x.val), s * x.eps)
    return abs(x)


def relu(x):
    """max(0, x) with derivative 0 for x <= 0 (used by barrier penalties)."""
    if isinstance(x, Dual):
        if x.val > 0:
            return x
        return Dual(0.0 * x.val, 0.0 * x.eps)
    return x if x > 0 else 0.0
