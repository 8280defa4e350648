"""Truncated second-order Taylor jets over the four coordinates (t, x, y, z).

A ``Jet2`` carries a value together with its exact gradient and Hessian with
respect to the coordinates, propagated through arithmetic by the chain rule
(forward-mode AD, no finite differences).  Values may be scalars or numpy
arrays of any shape; derivative arrays prepend the coordinate axes, so the
same code path serves single points and whole grids.

The Hessian is stored packed (upper triangle, 10 entries), which keeps it
exactly symmetric by construction.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

NCOORD = 4

# Packed upper-triangular index layout for the 4x4 Hessian.
PACK_INDEX = [(i, j) for i in range(NCOORD) for j in range(i, NCOORD)]
PACK_POS = {ij: k for k, ij in enumerate(PACK_INDEX)}


def _sym2(a, b):
    """Packed a_i b_j + a_j b_i (equals 2 a_i b_i on the diagonal)."""
    return np.stack([a[i] * b[j] + a[j] * b[i] for i, j in PACK_INDEX])


def _outer(a):
    """Packed a_i a_j."""
    return np.stack([a[i] * a[j] for i, j in PACK_INDEX])


class Jet2:
    """Value plus first and second coordinate derivatives.

    ``order`` controls how much is tracked: 0 = value only, 1 = +gradient,
    2 = +Hessian.  Arithmetic between jets of different order truncates to
    the lower order.
    """

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad=None, hess=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = grad
        self.hess = hess

    # -- constructors -------------------------------------------------

    @staticmethod
    def constant(value, shape=(), order=2):
        v = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        g = np.zeros((NCOORD,) + shape) if order >= 1 else None
        h = np.zeros((len(PACK_INDEX),) + shape) if order >= 2 else None
        return Jet2(v, g, h)

    @staticmethod
    def coordinate(k, values, order=2):
        v = np.asarray(values, dtype=float)
        g = h = None
        if order >= 1:
            g = np.zeros((NCOORD,) + v.shape)
            g[k] = 1.0
        if order >= 2:
            h = np.zeros((len(PACK_INDEX),) + v.shape)
        return Jet2(v.copy(), g, h)

    @property
    def order(self):
        if self.hess is not None:
            return 2
        return 1 if self.grad is not None else 0

    def hess_full(self):
        """Unpacked symmetric (4, 4, ...) Hessian."""
        full = np.empty((NCOORD, NCOORD) + self.value.shape)
        for k, (i, j) in enumerate(PACK_INDEX):
            full[i, j] = self.hess[k]
            full[j, i] = self.hess[k]
        return full

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value + other, _copy(self.grad), _copy(self.hess))
        g = _addn(self.grad, other.grad)
        h = _addn(self.hess, other.hess)
        return Jet2(self.value + other.value, g, h)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, _neg(self.grad), _neg(self.hess))

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet2) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            c = np.asarray(other, dtype=float)
            return Jet2(self.value * c,
                        None if self.grad is None else self.grad * c,
                        None if self.hess is None else self.hess * c)
        v = self.value * other.value
        g = h = None
        if self.grad is not None and other.grad is not None:
            g = self.value * other.grad + other.value * self.grad
            if self.hess is not None and other.hess is not None:
                h = (self.value * other.hess + other.value * self.hess
                     + _sym2(self.grad, other.grad))
        return Jet2(v, g, h)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    # -- elementary functions -------------------------------------------

    def _chain(self, u0, u1, u2):
        g = h = None
        if self.grad is not None:
            g = u1 * self.grad
            if self.hess is not None:
                h = u1 * self.hess + u2 * _outer(self.grad)
        return Jet2(u0, g, h)

    def reciprocal(self):
        if np.any(self.value == 0.0):
            raise DomainError("division by zero")
        v = self.value
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def sqrt(self):
        if np.any(self.value <= 0.0):
            raise DomainError("sqrt of a non-positive value")
        s = np.sqrt(self.value)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.value))

    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e, e)

    def log(self):
        if np.any(self.value <= 0.0):
            raise DomainError("log of a non-positive value")
        v = self.value
        return self._chain(np.log(v), 1.0 / v, -1.0 / v**2)

    def sin(self):
        return self._chain(np.sin(self.value), np.cos(self.value), -np.sin(self.value))

    def cos(self):
        return self._chain(np.cos(self.value), -np.sin(self.value), -np.cos(self.value))

    def powc(self, q: float):
        """self**q for a constant integer or half-integer exponent q."""
        v = self.value
        if q == round(q):
            n = int(round(q))
            if n == 0:
                return Jet2.constant(1.0, v.shape, self.order)
            if n < 0 and np.any(v == 0.0):
                raise DomainError("zero raised to a negative power")
            return self._chain(np.power(v, n), n * np.power(v, n - 1),
                               n * (n - 1) * np.power(v, n - 2))
        # half-integer exponent: restrict to positive base
        if np.any(v <= 0.0):
            raise DomainError("fractional power of a non-positive value")
        return self._chain(np.power(v, q), q * np.power(v, q - 1.0),
                           q * (q - 1.0) * np.power(v, q - 2.0))

    def require_finite(self, what="expression"):
        for part in (self.value, self.grad, self.hess):
            if part is not None and not np.all(np.isfinite(part)):
                raise DomainError(f"{what} evaluated to a non-finite value")
        return self


def _copy(a):
    return None if a is None else a.copy()


def _neg(a):
    return None if a is None else -a


def _addn(a, b):
    if a is None or b is None:
        return None
    return a + b
