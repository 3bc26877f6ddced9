"""Reference Lagrange bases, quadrature rules and the global C0 dof map.

Bases use equispaced lattice nodes on the unit reference triangle and are
evaluated exactly (monomial coefficients from the inverted lattice
Vandermonde matrix) together with first and second reference derivatives.
Triangle quadrature is generated by a collapsed Gauss construction
(Gauss-Jacobi in the singular direction), verified against closed-form
monomial integrals at build time; edges use Gauss-Legendre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .mesh import MappedMesh, NodeNumbering, global_node_numbering, lattice_multi_indices

MAX_QUAD_ORDER = 50


class UnsupportedQuadratureOrder(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    """Positive-weight rule with a stated polynomial exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int


def _monomial_integral_triangle(i: int, j: int) -> float:
    # int_T x^i y^j over the unit reference triangle
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


@lru_cache(maxsize=None)
def triangle_quadrature(order: int) -> QuadRule:
    """Collapsed Gauss rule on the reference triangle, exact to ``order``."""
    if not 0 <= order <= MAX_QUAD_ORDER:
        raise UnsupportedQuadratureOrder(f"triangle quadrature order {order} unsupported")
    n = max(1, (order + 2) // 2)
    # Gauss-Jacobi with weight (1 - s) on [0, 1] handles the Duffy Jacobian
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xj + 1.0)
    ws = 0.25 * wj
    xl, wl = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (xl + 1.0)
    wt = 0.5 * wl
    pts = np.empty((n * n, 2))
    wts = np.empty(n * n)
    idx = 0
    for a in range(n):
        for b in range(n):
            pts[idx] = (s[a], t[b] * (1.0 - s[a]))
            wts[idx] = ws[a] * wt[b]
            idx += 1
    rule = QuadRule(pts, wts, order)
    _verify_triangle_rule(rule)
    return rule


def _verify_triangle_rule(rule: QuadRule) -> None:
    for i in range(rule.exactness + 1):
        for j in range(rule.exactness + 1 - i):
            approx = np.sum(rule.weights * rule.points[:, 0] ** i * rule.points[:, 1] ** j)
            exact = _monomial_integral_triangle(i, j)
            if abs(approx - exact) > 1e-13 * max(1.0, abs(exact)) + 1e-15:
                raise AssertionError(
                    f"triangle rule of exactness {rule.exactness} misses monomial "
                    f"({i},{j}): {approx} vs {exact}"
                )


@lru_cache(maxsize=None)
def edge_quadrature(order: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1], exact to ``order``."""
    if not 0 <= order <= 2 * MAX_QUAD_ORDER:
        raise UnsupportedQuadratureOrder(f"edge quadrature order {order} unsupported")
    n = max(1, (order + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    rule = QuadRule(0.5 * (x + 1.0), 0.5 * w, order)
    for p in range(order + 1):
        approx = np.sum(rule.weights * rule.points**p)
        if abs(approx - 1.0 / (p + 1)) > 1e-13:
            raise AssertionError(f"edge rule of exactness {order} misses s^{p}")
    return rule


class ReferenceBasis:
    """Nodal Lagrange basis of given degree on the reference triangle."""

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError("basis degree must be at least 1")
        self.degree = degree
        self.exponents = lattice_multi_indices(degree)
        self.nodes = self.exponents / degree
        vand = self._monomial_values(self.nodes)
        self.coeffs = np.linalg.inv(vand)  # (n_monomials, n_basis)

    @property
    def n_basis(self) -> int:
        return len(self.nodes)

    def _monomial_values(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        return np.stack(
            [x**i * y**j for i, j in self.exponents], axis=1
        )

    @staticmethod
    def _dpow(x: np.ndarray, p: int, order: int) -> np.ndarray:
        """d^order/dx^order of x^p (zero when differentiated away)."""
        if p < order:
            return np.zeros_like(x)
        factor = 1.0
        for r in range(order):
            factor *= p - r
        return factor * x ** (p - order)

    def eval(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values, gradients and Hessians of all basis functions at ``pts``.

        Returns arrays of shape (Q, n), (Q, n, 2) and (Q, n, 2, 2).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        nm = len(self.exponents)
        m0 = np.empty((len(pts), nm))
        m1 = np.empty((len(pts), nm, 2))
        m2 = np.empty((len(pts), nm, 2, 2))
        for m, (i, j) in enumerate(self.exponents):
            i, j = int(i), int(j)
            xi0, xi1, xi2 = (self._dpow(x, i, r) for r in range(3))
            yj0, yj1, yj2 = (self._dpow(y, j, r) for r in range(3))
            m0[:, m] = xi0 * yj0
            m1[:, m, 0] = xi1 * yj0
            m1[:, m, 1] = xi0 * yj1
            m2[:, m, 0, 0] = xi2 * yj0
            m2[:, m, 0, 1] = m2[:, m, 1, 0] = xi1 * yj1
            m2[:, m, 1, 1] = xi0 * yj2
        values = m0 @ self.coeffs
        grads = np.einsum("qmd,mn->qnd", m1, self.coeffs)
        hess = np.einsum("qmde,mn->qnde", m2, self.coeffs)
        return values, grads, hess


@lru_cache(maxsize=None)
def reference_basis(degree: int) -> ReferenceBasis:
    return ReferenceBasis(degree)


@dataclass
class DofMap:
    """Per-element global dof indices in reference-node order."""

    degree: int
    element_dofs: np.ndarray
    ndof: int


def build_dof_map(mesh: MappedMesh, k: int) -> DofMap:
    """Global C0 numbering of the degree-``k`` Lagrange nodes."""
    if k < 2:
        raise ValueError("field degree must be at least 2")
    numbering = global_node_numbering(mesh.base, k)
    return DofMap(k, numbering.element_nodes, numbering.n_total)


@dataclass
class FeSpace:
    """Continuous Lagrange space of degree ``k`` on a mapped mesh."""

    mesh: MappedMesh
    k: int
    basis: ReferenceBasis
    dofs: DofMap

    @property
    def ndof(self) -> int:
        return self.dofs.ndof


def build_fe_space(mesh: MappedMesh, k: int) -> FeSpace:
    return FeSpace(mesh, k, reference_basis(k), build_dof_map(mesh, k))


def dof_points(space: FeSpace) -> np.ndarray:
    """Physical positions of the dofs (first-writing element wins)."""
    mesh = space.mesh
    geom_basis = reference_basis(mesh.k_g)
    gvals, _, _ = geom_basis.eval(space.basis.nodes)
    pos = np.zeros((space.ndof, 3))
    filled = np.zeros(space.ndof, dtype=bool)
    for t in range(mesh.n_elements):
        xq = np.einsum("qn,na->qa", gvals, mesh.element_geometry_nodes(t))
        dofs = space.dofs.element_dofs[t]
        new = ~filled[dofs]
        pos[dofs[new]] = xq[new]
        filled[dofs[new]] = True
    return pos


def interpolate(space: FeSpace, fn) -> np.ndarray:
    """Nodal interpolant coefficients of a callable ``fn(points) -> values``."""
    return np.asarray(fn(dof_points(space)), dtype=float)
