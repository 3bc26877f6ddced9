"""Analytic level-set surfaces and approximate distance/normal/projection.

Surfaces are closed quadric level sets ``Psi(x) = 0`` with hand-coded
derivatives to third order (exact jets).  The approximate frame at a point
``x`` uses the first-order formulas

    n = grad Psi / |grad Psi|,   dist = Psi / |grad Psi|,   proj = x - dist n,

which agree with the closest-point projection to second order in the
distance.  Iterating ``proj`` converges quadratically onto the surface and
is used to place mesh nodes; a single application is kept for error
measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jets import Jet3

EPS_GRAD = 1e-12
PROJECT_TOL = 1e-14
PROJECT_MAX_ITER = 30


class UnsupportedOrderError(ValueError):
    """Requested derivative order exceeds what the surface supports."""


class SingularPointError(ValueError):
    """The level-set gradient is (numerically) zero at the query point."""


class ProjectionError(RuntimeError):
    """Fixed-point surface projection failed to converge."""

    def __init__(self, residual, iterations):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"projection did not reach tolerance after {iterations} iterations "
            f"(last |Psi| = {residual:.3e})"
        )


@dataclass(frozen=True)
class LevelSetSurface:
    """Closed quadric surface {Psi = 0} with Psi = sum_a (x_a/axis_a)^2 - 1."""

    kind: str                      # "sphere" or "ellipsoid"
    semi_axes: tuple[float, float, float]
    eval_order: int = 3

    @staticmethod
    def unit_sphere() -> "LevelSetSurface":
        return LevelSetSurface("sphere", (1.0, 1.0, 1.0))

    @staticmethod
    def ellipsoid(a1: float, a2: float, a3: float) -> "LevelSetSurface":
        if min(a1, a2, a3) <= 0:
            raise ValueError("semi-axes must be positive")
        return LevelSetSurface("ellipsoid", (float(a1), float(a2), float(a3)))

    @staticmethod
    def stretched_ellipsoid() -> "LevelSetSurface":
        """The ellipsoid x1^2 + x2^2/2 + x3^2/2 = 1 used throughout the studies."""
        return LevelSetSurface.ellipsoid(1.0, math.sqrt(2.0), math.sqrt(2.0))

    @property
    def quad_coeffs(self) -> np.ndarray:
        a = np.asarray(self.semi_axes, dtype=float)
        return 1.0 / a**2

    def octahedron_vertices(self) -> np.ndarray:
        a1, a2, a3 = self.semi_axes
        return np.array(
            [
                [a1, 0.0, 0.0],
                [-a1, 0.0, 0.0],
                [0.0, a2, 0.0],
                [0.0, -a2, 0.0],
                [0.0, 0.0, a3],
                [0.0, 0.0, -a3],
            ]
        )


@dataclass(frozen=True)
class SurfacePointFrame:
    """Approximate normal, signed distance and projection at one point."""

    point: np.ndarray
    normal: np.ndarray
    distance: float
    projection: np.ndarray


def eval_level_set(surface: LevelSetSurface, x, order: int = 3) -> Jet3:
    """Exact jet of Psi at ambient points ``x`` (shape ``(..., 3)`` or ``(3,)``).

    ``order`` only bounds what the caller may rely on; quadric surfaces are
    evaluated exactly through order 3 (the third derivatives vanish).
    """
    if not 0 <= order <= surface.eval_order:
        raise UnsupportedOrderError(
            f"derivative order {order} outside supported range 0..{surface.eval_order}"
        )
    x = np.asarray(x, dtype=float)
    q = surface.quad_coeffs
    value = np.einsum("...a,a->...", x**2, q) - 1.0
    grad = 2.0 * q * x
    hess = np.broadcast_to(2.0 * np.diag(q), x.shape[:-1] + (3, 3)).copy()
    third = np.zeros(x.shape[:-1] + (3, 3, 3))
    return Jet3(value, grad, hess, third)


def frame_arrays(surface: LevelSetSurface, x):
    """Vectorized (normal, distance, projection) arrays at points ``x``."""
    x = np.asarray(x, dtype=float)
    jet = eval_level_set(surface, x, order=1)
    gnorm = np.linalg.norm(jet.grad, axis=-1)
    if np.any(gnorm <= EPS_GRAD):
        raise SingularPointError("level-set gradient vanishes at a query point")
    normal = jet.grad / gnorm[..., None]
    dist = jet.value / gnorm
    proj = x - dist[..., None] * normal
    return normal, dist, proj


def approx_frame(surface: LevelSetSurface, x) -> SurfacePointFrame:
    """Approximate frame at a single point."""
    x = np.asarray(x, dtype=float)
    normal, dist, proj = frame_arrays(surface, x)
    return SurfacePointFrame(x, normal, float(dist), proj)


def project_to_surface(
    surface: LevelSetSurface,
    x,
    tol: float = PROJECT_TOL,
    max_iter: int = PROJECT_MAX_ITER,
):
    """Iterate the approximate projection until ``|Psi| <= tol``.

    Accepts a single point or an array of points; raises
    :class:`ProjectionError` if any point fails to converge.
    """
    y = np.array(x, dtype=float)
    single = y.ndim == 1
    pts = y[None, :] if single else y
    residual = np.abs(eval_level_set(surface, pts, order=0).value)
    for _ in range(max_iter):
        active = residual > tol
        if not np.any(active):
            return pts[0] if single else pts
        _, _, proj = frame_arrays(surface, pts[active])
        pts[active] = proj
        residual[active] = np.abs(eval_level_set(surface, pts[active], order=0).value)
    raise ProjectionError(residual.max(), max_iter)
