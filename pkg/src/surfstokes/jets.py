"""Forward-mode Taylor arithmetic to third order in three ambient variables.

A :class:`Jet3` carries the value, gradient, Hessian and third-derivative
tensor of a scalar field at one point (or at a batch of points: every field
broadcasts over leading axes).  Arithmetic follows the truncated Taylor
composition rules, so derivatives of closed-form fields come out exact up
to roundoff.  Field expressions are built from a small composable algebra
(:data:`X1`, :data:`X2`, :data:`X3`, constants, ``+ - * /``, ``exp``,
``sin``, ``cos``, ``sqrt``, ``reciprocal``) rather than parsed from strings.
"""

from __future__ import annotations

import numpy as np


class JetDomainError(ArithmeticError):
    """Raised when a jet operation is evaluated outside its domain."""


def _sym_gh(g, h):
    # symmetrized grad (x) hess contribution to a third-derivative tensor
    return (
        np.einsum("...i,...jk->...ijk", g, h)
        + np.einsum("...j,...ik->...ijk", g, h)
        + np.einsum("...k,...ij->...ijk", g, h)
    )


class Jet3:
    """Taylor data (value, grad, hess, third) of a scalar field at a point.

    ``hess`` and ``third`` are stored as full symmetric arrays; all
    operations preserve symmetry exactly.  Arbitrary leading batch axes are
    supported: ``value`` has shape ``S``, ``grad`` ``S+(3,)`` and so on.
    """

    __slots__ = ("value", "grad", "hess", "third")

    def __init__(self, value, grad=None, hess=None, third=None):
        value = np.asarray(value, dtype=float)
        shape = value.shape
        self.value = value
        self.grad = np.zeros(shape + (3,)) if grad is None else np.asarray(grad, float)
        self.hess = np.zeros(shape + (3, 3)) if hess is None else np.asarray(hess, float)
        self.third = (
            np.zeros(shape + (3, 3, 3)) if third is None else np.asarray(third, float)
        )

    @classmethod
    def constant(cls, value):
        return cls(np.asarray(value, dtype=float))

    @staticmethod
    def coordinates(x):
        """Seed jets for the three coordinate functions at points ``x``.

        ``x`` has shape ``(..., 3)``; returns a tuple of three jets with the
        matching batch shape.
        """
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        jets = []
        for a in range(3):
            g = np.zeros(shape + (3,))
            g[..., a] = 1.0
            jets.append(Jet3(x[..., a], g))
        return tuple(jets)

    # -- ring operations -------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Jet3):
            return Jet3(self.value + other, self.grad, self.hess, self.third)
        return Jet3(
            self.value + other.value,
            self.grad + other.grad,
            self.hess + other.hess,
            self.third + other.third,
        )

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.value, -self.grad, -self.hess, -self.third)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet3) else -np.asarray(other, float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            c = np.asarray(other, dtype=float)
            return Jet3(
                self.value * c,
                self.grad * c[..., None],
                self.hess * c[..., None, None],
                self.third * c[..., None, None, None],
            ) if c.ndim else Jet3(
                self.value * c, self.grad * c, self.hess * c, self.third * c
            )
        a, b = self, other
        av = a.value[..., None]
        bv = b.value[..., None]
        value = a.value * b.value
        grad = av * b.grad + bv * a.grad
        hess = (
            av[..., None] * b.hess
            + bv[..., None] * a.hess
            + np.einsum("...i,...j->...ij", a.grad, b.grad)
            + np.einsum("...i,...j->...ij", b.grad, a.grad)
        )
        third = (
            av[..., None, None] * b.third
            + bv[..., None, None] * a.third
            + _sym_gh(a.grad, b.hess)
            + _sym_gh(b.grad, a.hess)
        )
        return Jet3(value, grad, hess, third)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet3):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    # -- compositions ----------------------------------------------------

    def _compose(self, r0, r1, r2, r3):
        """Chain rule for a univariate outer function with derivatives r0..r3."""
        f = self
        g1 = np.asarray(r1)[..., None]
        g2 = np.asarray(r2)[..., None]
        g3 = np.asarray(r3)[..., None]
        value = np.asarray(r0)
        grad = g1 * f.grad
        hess = g1[..., None] * f.hess + g2[..., None] * np.einsum(
            "...i,...j->...ij", f.grad, f.grad
        )
        third = (
            g1[..., None, None] * f.third
            + g2[..., None, None] * _sym_gh(f.grad, f.hess)
            + g3[..., None, None]
            * np.einsum("...i,...j,...k->...ijk", f.grad, f.grad, f.grad)
        )
        return Jet3(value, grad, hess, third)

    def reciprocal(self):
        v = self.value
        if np.any(np.abs(v) == 0.0):
            raise JetDomainError("reciprocal of a jet with zero value")
        iv = 1.0 / v
        return self._compose(iv, -iv**2, 2.0 * iv**3, -6.0 * iv**4)

    def exp(self):
        e = np.exp(self.value)
        return self._compose(e, e, e, e)

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._compose(s, c, -s, -c)

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._compose(c, -s, -c, s)

    def sqrt(self):
        v = self.value
        if np.any(v <= 0.0):
            raise JetDomainError("sqrt of a jet with non-positive value")
        r = np.sqrt(v)
        return self._compose(r, 0.5 / r, -0.25 / (v * r), 0.375 / (v * v * r))

    # -- derivative extraction -------------------------------------------

    def derivative(self, axis):
        """Jet of the partial derivative along ``axis``.

        The returned jet is valid one order lower than the input: its
        ``third`` field is zeroed, and its ``hess`` is only meaningful when
        the input's ``third`` was.
        """
        return Jet3(
            self.grad[..., axis],
            self.hess[..., axis, :],
            self.third[..., axis, :, :],
        )


# -- field expressions ----------------------------------------------------


class FieldExpr:
    """A scalar field on R^3 built from a fixed algebra of primitives."""

    def jet(self, xjets):
        """Evaluate to a :class:`Jet3` given seed jets for the coordinates."""
        raise NotImplementedError

    def __call__(self, x):
        """Plain values at points ``x`` of shape ``(..., 3)``."""
        return self.jet(Jet3.coordinates(x)).value

    def __add__(self, other):
        return _Sum(self, _wrap(other))

    def __radd__(self, other):
        return _Sum(_wrap(other), self)

    def __sub__(self, other):
        return _Sum(self, _Scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        return _Sum(_wrap(other), _Scale(self, -1.0))

    def __neg__(self):
        return _Scale(self, -1.0)

    def __mul__(self, other):
        return _Product(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _Product(self, _Unary(_wrap(other), "reciprocal"))


def _wrap(obj):
    if isinstance(obj, FieldExpr):
        return obj
    return Const(float(obj))


class Coord(FieldExpr):
    def __init__(self, axis):
        if axis not in (0, 1, 2):
            raise ValueError("coordinate axis must be 0, 1 or 2")
        self.axis = axis

    def jet(self, xjets):
        return xjets[self.axis]


class Const(FieldExpr):
    def __init__(self, value):
        self.value = float(value)

    def jet(self, xjets):
        shape = np.asarray(xjets[0].value).shape
        return Jet3(np.full(shape, self.value))


class _Sum(FieldExpr):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def jet(self, xjets):
        return self.a.jet(xjets) + self.b.jet(xjets)


class _Scale(FieldExpr):
    def __init__(self, a, c):
        self.a, self.c = a, float(c)

    def jet(self, xjets):
        return self.a.jet(xjets) * self.c


class _Product(FieldExpr):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def jet(self, xjets):
        return self.a.jet(xjets) * self.b.jet(xjets)


class _Unary(FieldExpr):
    _ops = ("exp", "sin", "cos", "sqrt", "reciprocal")

    def __init__(self, a, op):
        if op not in self._ops:
            raise ValueError(f"unsupported unary field op {op!r}")
        self.a, self.op = a, op

    def jet(self, xjets):
        return getattr(self.a.jet(xjets), self.op)()


def exp(e):
    return _Unary(_wrap(e), "exp")


def sin(e):
    return _Unary(_wrap(e), "sin")


def cos(e):
    return _Unary(_wrap(e), "cos")


def sqrt(e):
    return _Unary(_wrap(e), "sqrt")


def reciprocal(e):
    return _Unary(_wrap(e), "reciprocal")


X1 = Coord(0)
X2 = Coord(1)
X3 = Coord(2)


def eval_field_jet(expr: FieldExpr, x) -> Jet3:
    """Jet of ``expr`` at ambient points ``x`` with derivatives to order 3."""
    return expr.jet(Jet3.coordinates(x))
