"""Forward-mode derivatives with second-order dual numbers.

A :class:`Jet` carries a value together with its gradient and (optionally) its
Hessian with respect to a fixed set of seed directions.  Arithmetic is the
truncated Taylor arithmetic of nested dual numbers ``(a + b e1) + (c + d e1) e2``
with all ``n`` directions carried at once, so a single forward sweep yields the
full Hessian.

Values may be batched: ``val`` has shape ``batch``, ``grad`` has shape
``batch + (n,)`` and ``hess`` has shape ``batch + (n, n)``.  This lets one call
evaluate a stage function for every stage of a horizon simultaneously.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class UnsupportedOperation(TypeError):
    """Raised when a non-smooth primitive is applied to a Jet."""


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


class Jet:
    __slots__ = ("val", "grad", "hess")
    # make numpy defer to the reflected operators
    __array_ufunc__ = None

    def __init__(self, val, grad, hess=None):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    # -- construction helpers -------------------------------------------------
    @classmethod
    def variables(cls, values: Sequence, order: int = 2, batch_shape=None) -> list[Jet]:
        """Seed one Jet per entry of ``values`` (each direction a unit vector).

        ``values`` may be a sequence of scalars or of equally shaped arrays.
        """
        n = len(values)
        arrs = [np.asarray(v, dtype=float) for v in values]
        shape = np.broadcast_shapes(*(a.shape for a in arrs)) if batch_shape is None else batch_shape
        out = []
        for i, a in enumerate(arrs):
            g = np.zeros(shape + (n,))
            g[..., i] = 1.0
            h = np.zeros(shape + (n, n)) if order == 2 else None
            out.append(cls(np.broadcast_to(a, shape).copy(), g, h))
        return out

    def _lift(self, c):
        c = np.asarray(c, dtype=float)
        shape = np.broadcast_shapes(np.shape(self.val), c.shape)
        n = self.grad.shape[-1]
        g = np.zeros(shape + (n,))
        h = np.zeros(shape + (n, n)) if self.hess is not None else None
        return Jet(np.broadcast_to(c, shape), g, h)

    def _chain(self, f0, f1, f2) -> Jet:
        f1e = np.asarray(f1)[..., None]
        g = f1e * self.grad
        h = None
        if self.hess is not None:
            f2e = np.asarray(f2)[..., None, None]
            h = f1e[..., None] * self.hess + f2e * _outer(self.grad, self.grad)
        return Jet(f0, g, h)

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            h = None if self.hess is None or other.hess is None else self.hess + other.hess
            return Jet(self.val + other.val, self.grad + other.grad, h)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            av = np.asarray(a.val)[..., None]
            bv = np.asarray(b.val)[..., None]
            g = av * b.grad + bv * a.grad
            h = None
            if a.hess is not None and b.hess is not None:
                h = (
                    av[..., None] * b.hess
                    + bv[..., None] * a.hess
                    + _outer(a.grad, b.grad)
                    + _outer(b.grad, a.grad)
                )
            return Jet(a.val * b.val, g, h)
        c = np.asarray(other, dtype=float)
        ce = c[..., None]
        return Jet(self.val * c, ce * self.grad, None if self.hess is None else ce[..., None] * self.hess)

    __rmul__ = __mul__

    def reciprocal(self) -> Jet:
        v = self.val
        inv = 1.0 / v
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        v = self.val
        if p == 2.0:
            return self._chain(v * v, 2.0 * v, 2.0 * np.ones_like(v))
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    # -- non-smooth operations are refused ------------------------------------
    def _nonsmooth(self, *args):
        raise UnsupportedOperation("non-smooth operation on a dual number")

    __abs__ = _nonsmooth
    __lt__ = __le__ = __gt__ = __ge__ = _nonsmooth
    __floor__ = __ceil__ = __round__ = __mod__ = _nonsmooth

    def __repr__(self) -> str:
        return f"Jet(val={self.val!r}, order={self.order})"


# -- elementary functions -----------------------------------------------------

def sin(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.val), np.cos(x.val)
        return x._chain(s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.val), np.cos(x.val)
        return x._chain(c, -s, -c)
    return np.cos(x)


def tan(x):
    if isinstance(x, Jet):
        t = np.tan(x.val)
        d = 1.0 + t * t
        return x._chain(t, d, 2.0 * t * d)
    return np.tan(x)


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.val)
        return x._chain(e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        inv = 1.0 / x.val
        return x._chain(np.log(x.val), inv, -inv * inv)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        r = np.sqrt(x.val)
        return x._chain(r, 0.5 / r, -0.25 / (r * x.val))
    return np.sqrt(x)


def tanh(x):
    if isinstance(x, Jet):
        t = np.tanh(x.val)
        d = 1.0 - t * t
        return x._chain(t, d, -2.0 * t * d)
    return np.tanh(x)


def value(x):
    """Plain value of a Jet or a number."""
    return x.val if isinstance(x, Jet) else x


# -- derivative evaluation interface -----------------------------------------

@dataclass(frozen=True)
class Derivatives:
    value: np.ndarray
    jacobian: np.ndarray
    hessian: Optional[np.ndarray] = None


def _as_jet(y, template: Jet) -> Jet:
    return y if isinstance(y, Jet) else template._lift(y)


def dual_derivatives(fn: Callable, order: int = 1) -> Callable[[np.ndarray], Derivatives]:
    """Wrap a value-only function ``fn(x)`` into one returning exact derivatives.

    ``fn`` receives a list of scalar dual numbers and returns either a scalar or
    a sequence of scalars.  For a scalar output the Jacobian is the gradient
    (shape ``(n,)``) and the Hessian has shape ``(n, n)``; for vector outputs
    the shapes gain a leading ``m`` axis.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")

    def evaluate(x) -> Derivatives:
        x = np.asarray(x, dtype=float)
        xs = Jet.variables(list(x), order=order, batch_shape=())
        y = fn(xs)
        if isinstance(y, (list, tuple)):
            ys = [_as_jet(yi, xs[0]) for yi in y]
            val = np.array([yi.val for yi in ys], dtype=float)
            jac = np.stack([yi.grad for yi in ys])
            hess = np.stack([yi.hess for yi in ys]) if order == 2 else None
        else:
            yj = _as_jet(y, xs[0])
            val = np.asarray(yj.val, dtype=float)
            jac = np.asarray(yj.grad)
            hess = np.asarray(yj.hess) if order == 2 else None
        return Derivatives(val, jac, hess)

    return evaluate
