"""Second-order forward-mode differentiation.

A :class:`Jet` carries a value together with its gradient and Hessian with
respect to ``n`` input coordinates. Arithmetic follows the truncated Taylor
rules, which is what two nested levels of dual numbers compute, but with
all ``n`` tangent directions carried at once. Everything is vectorised:
``val`` may have any batch shape ``S``; ``grad`` has shape ``S + (n,)`` and
``hess`` has shape ``S + (n, n)``.

The module-level functions (:func:`sin`, :func:`exp`, ...) accept jets,
plain floats, or numpy arrays, so a map written with them can be evaluated
either way.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 100.0

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def variables(cls, points: np.ndarray) -> list["Jet"]:
        """Seed one jet per coordinate of ``points`` (shape ``S + (n,)``)."""
        points = np.asarray(points, dtype=float)
        n = points.shape[-1]
        batch = points.shape[:-1]
        out = []
        for k in range(n):
            grad = np.zeros(batch + (n,))
            grad[..., k] = 1.0
            out.append(cls(points[..., k], grad, np.zeros(batch + (n, n))))
        return out

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.grad + other.grad, self.hess + other.hess)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            ga, gb = a.grad, b.grad
            outer = ga[..., :, None] * gb[..., None, :]
            return Jet(
                a.val * b.val,
                a.val[..., None] * gb + b.val[..., None] * ga,
                a.val[..., None, None] * b.hess
                + b.val[..., None, None] * a.hess
                + outer
                + np.swapaxes(outer, -1, -2),
            )
        c = np.asarray(other)
        return Jet(self.val * c, self.grad * c[..., None], self.hess * c[..., None, None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        c = np.asarray(other)
        return self * (1.0 / c)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        if p == 2.0:
            return self * self
        v = self.val
        return _chain(self, v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __repr__(self) -> str:
        return f"Jet(val={self.val!r}, nvars={self.nvars})"


def _chain(x: Jet, f0, f1, f2) -> Jet:
    g = x.grad
    return Jet(
        f0,
        f1[..., None] * g,
        f1[..., None, None] * x.hess + f2[..., None, None] * g[..., :, None] * g[..., None, :],
    )


def reciprocal(x):
    if not isinstance(x, Jet):
        return 1.0 / np.asarray(x, dtype=float)
    inv = 1.0 / x.val
    return _chain(x, inv, -inv * inv, 2.0 * inv * inv * inv)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.val), np.cos(x.val)
    return _chain(x, s, c, -s)


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.val), np.cos(x.val)
    return _chain(x, c, -s, -c)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.val)
    return _chain(x, e, e, e)


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    inv = 1.0 / x.val
    return _chain(x, np.log(x.val), inv, -inv * inv)


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    r = np.sqrt(x.val)
    return _chain(x, r, 0.5 / r, -0.25 / (r * x.val))


def tanh(x):
    if not isinstance(x, Jet):
        return np.tanh(x)
    t = np.tanh(x.val)
    d = 1.0 - t * t
    return _chain(x, t, d, -2.0 * t * d)


def arctan(x):
    if not isinstance(x, Jet):
        return np.arctan(x)
    d = 1.0 / (1.0 + x.val * x.val)
    return _chain(x, np.arctan(x.val), d, -2.0 * x.val * d * d)


def value(x):
    """Plain value of a jet or a constant."""
    return x.val if isinstance(x, Jet) else x


def stack_components(components, batch_shape: tuple, nvars: int):
    """Stack per-component jets/constants into (value, first, second) arrays.

    Returns arrays of shape ``S + (m,)``, ``S + (m, n)`` and ``S + (m, n, n)``.
    """
    m = len(components)
    val = np.empty(batch_shape + (m,))
    d1 = np.zeros(batch_shape + (m, nvars))
    d2 = np.zeros(batch_shape + (m, nvars, nvars))
    for a, c in enumerate(components):
        if isinstance(c, Jet):
            val[..., a] = c.val
            d1[..., a, :] = c.grad
            d2[..., a, :, :] = c.hess
        else:
            val[..., a] = c
    return val, d1, d2
