"""Error measurement on the discrete surface and numerical identity checks.

Stream-function errors compare the discrete solution against either the
canonical closed-form extension evaluated directly on the discrete surface
("ce") or against its pullback through the approximate projection
("tilde"); both are mean-aligned on the discrete surface first, since the
discrete solution carries a zero-mean constraint while the reference does
not.  Velocity errors compare the tangential curl of the solution against
the closed-form velocity, either raw ("ce") or mapped through the
approximate Piola transform ("piola").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import velocity_values
from .fe_space import FeSpace, reference_basis, triangle_quadrature
from .geometry import LevelSetSurface, frame_arrays, project_to_surface
from .jets import FieldExpr, Jet3
from .mesh import MappedMesh, build_base_mesh, build_mapped_mesh
from .surface_ops import curl_tables, element_frames, skew

STREAM_VARIANTS = ("tilde", "ce")
VELOCITY_VARIANTS = ("piola", "ce")


@dataclass
class ErrorRecord:
    """Per-level measurements of one convergence study."""

    level: int
    h: float
    ndof: int
    err_stream_tilde: float | None = None
    err_stream_ce: float | None = None
    err_vel_piola: float | None = None
    err_vel_ce: float | None = None
    iterations: int = 0
    seconds: float = 0.0


def _error_quad_order(space: FeSpace, quad_order):
    # default: assembly exactness plus two
    return quad_order if quad_order is not None else 2 * space.k + 4


def stream_error(
    mesh: MappedMesh,
    space: FeSpace,
    coeffs: np.ndarray,
    variant: str,
    stream: FieldExpr | None = None,
    quad_order: int | None = None,
) -> float:
    """L2 error of the stream function after aligning discrete means."""
    if variant not in STREAM_VARIANTS:
        raise ValueError(f"unknown stream error variant {variant!r}")
    if stream is None:
        from .assembly import stream_solution

        stream = stream_solution()
    rule = triangle_quadrature(_error_quad_order(space, quad_order))
    geom_tab = reference_basis(mesh.k_g).eval(rule.points)
    ref_vals, _, _ = space.basis.eval(rule.points)
    area = 0.0
    int_delta = 0.0
    int_delta_sq = 0.0
    for t in range(mesh.n_elements):
        fr = element_frames(mesh, t, rule.points, tables=geom_tab)
        w = rule.weights * fr.J
        if variant == "tilde":
            _, _, proj = frame_arrays(mesh.surface, fr.x)
            ref = stream(proj)
        else:
            ref = stream(fr.x)
        num = ref_vals @ coeffs[space.dofs.element_dofs[t]]
        delta = ref - num
        area += w.sum()
        int_delta += w @ delta
        int_delta_sq += w @ delta**2
    # L2 norm of (delta - mean(delta)); aligning means is the same as
    # removing the mean of the difference
    return math.sqrt(max(int_delta_sq - int_delta**2 / area, 0.0))


def velocity_error(
    mesh: MappedMesh,
    space: FeSpace,
    coeffs: np.ndarray,
    variant: str,
    stream: FieldExpr | None = None,
    quad_order: int | None = None,
) -> float:
    """L2 error of the recovered velocity (tangential curl of the solution)."""
    if variant not in VELOCITY_VARIANTS:
        raise ValueError(f"unknown velocity error variant {variant!r}")
    rule = triangle_quadrature(_error_quad_order(space, quad_order))
    geom_tab = reference_basis(mesh.k_g).eval(rule.points)
    _, ref_grads, _ = space.basis.eval(rule.points)
    total = 0.0
    for t in range(mesh.n_elements):
        fr = element_frames(mesh, t, rule.points, tables=geom_tab)
        w = rule.weights * fr.J
        local = coeffs[space.dofs.element_dofs[t]]
        u_h = np.einsum("qna,n->qa", curl_tables(fr, ref_grads), local)
        if variant == "ce":
            ref = velocity_values(mesh.surface, fr.x, stream)
        else:
            normal, _, proj = frame_arrays(mesh.surface, fr.x)
            m, _, _ = frame_arrays(mesh.surface, proj)
            u = velocity_values(mesh.surface, proj, stream)
            denom = np.einsum("qa,qa->q", m, fr.n)
            ref = u - m * (np.einsum("qa,qa->q", fr.n, u) / denom)[:, None]
        diff = ref - u_h
        total += w @ np.einsum("qa,qa->q", diff, diff)
    return math.sqrt(total)


def observed_orders(errors, hs):
    """Convergence rates log(e_{i-1}/e_i) / log(h_{i-1}/h_i); None when undefined."""
    errors = list(errors)
    hs = list(hs)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error/mesh-size lists of length >= 2")
    rates = []
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 is None or e1 is None or e0 <= 0.0 or e1 <= 0.0:
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log(hs[i - 1] / hs[i]))
    return rates


# -- exact-surface operators from jets ---------------------------------------


def _projection_jets(surface: LevelSetSurface, x):
    """Jets (valid to order 2) of the approximate projection components."""
    from .geometry import eval_level_set

    psi = eval_level_set(surface, x, order=3)
    dpsi = [psi.derivative(a) for a in range(3)]
    gnorm = (dpsi[0] * dpsi[0] + dpsi[1] * dpsi[1] + dpsi[2] * dpsi[2]).sqrt()
    inv = gnorm.reciprocal()
    n = [d * inv for d in dpsi]
    dist = psi * inv
    xj = Jet3.coordinates(x)
    proj = tuple(xj[a] - dist * n[a] for a in range(3))
    nv = np.stack([c.value for c in n], axis=-1)
    return proj, nv


def exact_surface_hessian_data(surface: LevelSetSurface, expr: FieldExpr, x):
    """(gradient, projected Hessian, bending operator, values) of ``expr``.

    Evaluated with jets through the normal-constant extension at on-surface
    points ``x``; exact up to roundoff when the points lie on the surface.
    """
    x = np.asarray(x, dtype=float)
    proj_jets, nv = _projection_jets(surface, x)
    fj = expr.jet(proj_jets)
    P = np.eye(3) - np.einsum("...a,...b->...ab", nv, nv)
    grad = np.einsum("...ab,...b->...a", P, fj.grad)
    M = np.einsum("...ac,...cd,...db->...ab", P, fj.hess, P)
    K = skew(nv)
    H = 0.5 * (
        np.einsum("...ac,...cb->...ab", K, M) - np.einsum("...ac,...cb->...ab", M, K)
    )
    return grad, M, H, fj.value


@dataclass
class IbpReport:
    """Closed-surface integration-by-parts balance for the bending identity."""

    lhs: float
    rhs: float
    residual: float
    hess_term: float
    grad_term: float
    mass: float


def verify_global_ibp(
    surface: LevelSetSurface,
    phi: FieldExpr,
    psi: FieldExpr,
    harmonic_degree: int,
    level: int,
    k_g: int,
    quad_order: int = 10,
) -> IbpReport:
    """Numerical balance of the bihamonic bending identity on the sphere.

    ``phi`` must restrict to a spherical harmonic of the given degree, so
    the squared-bilaplacian action is l^2 (l+1)^2.  Both sides are computed
    with exact-surface operators (jets through the projection) integrated
    over the mapped mesh, so the residual reflects pure geometric
    quadrature error of order k_g + 1.
    """
    if surface.kind != "sphere":
        raise ValueError("the closed-form balance check runs on the unit sphere")
    l = harmonic_degree
    base = build_base_mesh(surface, level)
    mesh = build_mapped_mesh(surface, base, k_g)
    rule = triangle_quadrature(quad_order)
    geom_tab = reference_basis(k_g).eval(rule.points)
    hess_term = grad_term = mass = 0.0
    for t in range(mesh.n_elements):
        fr = element_frames(mesh, t, rule.points, tables=geom_tab)
        w = rule.weights * fr.J
        _, _, proj = frame_arrays(surface, fr.x)
        g1, _, h1, v1 = exact_surface_hessian_data(surface, phi, proj)
        g2, _, h2, v2 = exact_surface_hessian_data(surface, psi, proj)
        hess_term += w @ np.einsum("qab,qab->q", h1, h2)
        grad_term += w @ np.einsum("qa,qa->q", g1, g2)
        mass += w @ (v1 * v2)
    lhs = float(l**2 * (l + 1) ** 2 * mass)
    rhs = float(2.0 * (hess_term + grad_term))  # Gauss curvature 1 on the sphere
    scale = max(abs(lhs), abs(rhs), 1e-30)
    return IbpReport(lhs, rhs, abs(lhs - rhs) / scale, hess_term, grad_term, mass)


def verify_hessian_identities(surface: LevelSetSurface, expr: FieldExpr, points) -> float:
    """Max relative residual of the projected-Hessian identities at surface points.

    Checks that the tangential-derivative route and the extension route to
    the projected Hessian agree, and that the antisymmetric part of the raw
    second tangential derivative is annihilated by the projector sandwich.
    """
    x = np.asarray(points, dtype=float)
    proj_jets, nv = _projection_jets(surface, x)
    fj = expr.jet(proj_jets)
    P = np.eye(3) - np.einsum("...a,...b->...ab", nv, nv)

    # route 1: P hess(extension) P
    M1 = np.einsum("...ac,...cd,...db->...ab", P, fj.hess, P)

    # route 2: P times the tangential Jacobian of the tangential gradient,
    # with the projector entries themselves carried as jets
    from .assembly import _normal_jets

    dext = [fj.derivative(a) for a in range(3)]
    nj = _normal_jets(surface, x)
    pj = [[(1.0 if a == b else 0.0) - nj[a] * nj[b] for b in range(3)] for a in range(3)]
    v = [
        sum((pj[a][b] * dext[b] for b in range(1, 3)), pj[a][0] * dext[0])
        for a in range(3)
    ]
    D = np.empty(x.shape[:-1] + (3, 3))
    for i in range(3):
        for j in range(3):
            # D_ij = j-th component of the tangential gradient of v_i
            D[..., i, j] = np.einsum("...b,...b->...", P[..., j, :], v[i].grad)
    M2 = np.einsum("...ac,...cb->...ab", P, D)

    anti = D - np.swapaxes(D, -1, -2)
    sandwiched = np.einsum("...ac,...cd,...db->...ab", P, anti, P)

    scale = 1.0 + np.linalg.norm(M1, axis=(-2, -1))
    r1 = np.linalg.norm(M1 - M2, axis=(-2, -1)) / scale
    r2 = np.linalg.norm(sandwiched, axis=(-2, -1)) / scale
    return float(max(r1.max(), r2.max()))


def random_surface_points(surface: LevelSetSurface, count: int, seed: int = 0) -> np.ndarray:
    """Random points on the surface (random directions projected onto it)."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    scale = np.asarray(surface.semi_axes)
    return project_to_surface(surface, dirs * scale)
