"""Per-element differential geometry on polynomial-mapped surface meshes.

Everything is driven by the chart F_T of one curved element: tangential
gradients use DF (DF^T DF)^{-1} grad-hat, the projected surface Hessian
sandwiches the tangential Jacobian of the surface-gradient field between
tangential projectors (which kills its antisymmetric normal part exactly),
and the bending operator is the commutator-type expression

    H(psi) = (n^x M - M n^x) / 2,   M = projected surface Hessian,

with n^x the cross-product matrix of the element normal.  H is symmetric
and trace free, and coincides with the deformation tensor of the surface
curl of psi; ``verify_hess_like_equiv`` checks that identity numerically
through an independent route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fe_space import ReferenceBasis, reference_basis
from .mesh import LOCAL_EDGE_VERTICES, REF_VERTICES, MappedMesh

JACOBIAN_FLOOR = 1e-14


class InvertedElementError(RuntimeError):
    """The mapped element is (numerically) degenerate."""


def skew(xi) -> np.ndarray:
    """Cross-product matrix: skew(xi) @ v == cross(xi, v). Batched over leading axes."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (3, 3))
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    out[..., 0, 1] = -x3
    out[..., 0, 2] = x2
    out[..., 1, 0] = x3
    out[..., 1, 2] = -x1
    out[..., 2, 0] = -x2
    out[..., 2, 1] = x1
    return out


@dataclass
class ElementFrames:
    """Geometry data of one element at a batch of reference points."""

    element: int
    xi: np.ndarray        # (Q, 2)
    x: np.ndarray         # (Q, 3)
    DF: np.ndarray        # (Q, 3, 2)
    DF2: np.ndarray       # (Q, 3, 2, 2)
    n: np.ndarray         # (Q, 3) outward unit normal
    J: np.ndarray         # (Q,) area element
    P: np.ndarray         # (Q, 3, 3) tangential projector
    Ginv: np.ndarray      # (Q, 2, 2)
    B: np.ndarray         # (Q, 3, 2) chart gradient operator DF Ginv
    dG: np.ndarray        # (Q, 2, 2, 2) reference derivatives of the metric
    dn: np.ndarray        # (Q, 3, 2) reference derivatives of the unit normal


@dataclass
class GeometryFrame:
    """Single-point view of :class:`ElementFrames` (spec surface)."""

    element: int
    xi: np.ndarray
    x: np.ndarray
    DF: np.ndarray
    DF2: np.ndarray
    n_h: np.ndarray
    J: float
    P_h: np.ndarray
    batch: ElementFrames


def element_frames(
    mesh: MappedMesh,
    t: int,
    xi_pts,
    geom_basis: ReferenceBasis | None = None,
    tables=None,
) -> ElementFrames:
    """Evaluate the chart of element ``t`` at reference points ``xi_pts``.

    ``tables`` may carry precomputed geometry-basis (values, grads, hessians)
    at ``xi_pts`` so loops over elements do not re-evaluate the basis.
    """
    xi_pts = np.atleast_2d(np.asarray(xi_pts, dtype=float))
    if tables is None:
        if geom_basis is None:
            geom_basis = reference_basis(mesh.k_g)
        tables = geom_basis.eval(xi_pts)
    vals, grads, hess = tables
    nodes = mesh.element_geometry_nodes(t)  # (N, 3)
    x = np.einsum("qn,na->qa", vals, nodes)
    DF = np.einsum("qnd,na->qad", grads, nodes)
    DF2 = np.einsum("qnde,na->qade", hess, nodes)
    w = np.cross(DF[:, :, 0], DF[:, :, 1])
    J = np.linalg.norm(w, axis=1)
    h_t = mesh.h_per_element[t]
    if np.any(J < JACOBIAN_FLOOR * h_t**2):
        raise InvertedElementError(f"degenerate chart on element {t}")
    n = w / J[:, None]
    P = np.eye(3) - np.einsum("qa,qb->qab", n, n)
    G = np.einsum("qad,qae->qde", DF, DF)
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]
    if np.any(det <= 0.0):
        raise InvertedElementError(f"singular metric on element {t}")
    Ginv = np.empty_like(G)
    Ginv[:, 0, 0] = G[:, 1, 1] / det
    Ginv[:, 1, 1] = G[:, 0, 0] / det
    Ginv[:, 0, 1] = -G[:, 0, 1] / det
    Ginv[:, 1, 0] = -G[:, 1, 0] / det
    B = np.einsum("qad,qde->qae", DF, Ginv)
    dG = np.einsum("qadj,qae->qdej", DF2, DF) + np.einsum(
        "qad,qaej->qdej", DF, DF2
    )
    dw = np.empty((len(xi_pts), 3, 2))
    for j in range(2):
        dw[:, :, j] = np.cross(DF2[:, :, 0, j], DF[:, :, 1]) + np.cross(
            DF[:, :, 0], DF2[:, :, 1, j]
        )
    dn = np.einsum("qab,qbj->qaj", P, dw) / J[:, None, None]
    return ElementFrames(t, xi_pts, x, DF, DF2, n, J, P, Ginv, B, dG, dn)


def element_geometry(mesh: MappedMesh, t: int, xi) -> GeometryFrame:
    """Geometry frame of element ``t`` at one reference point."""
    fr = element_frames(mesh, t, np.asarray(xi, dtype=float)[None, :])
    return GeometryFrame(
        t, fr.xi[0], fr.x[0], fr.DF[0], fr.DF2[0], fr.n[0], float(fr.J[0]), fr.P[0], fr
    )


# -- batched kernels (per element, per reference point, per basis) ---------


def gradient_tables(frames: ElementFrames, ref_grads: np.ndarray) -> np.ndarray:
    """Tangential gradients, shape (Q, n, 3), from reference gradients (Q, n, 2)."""
    return np.einsum("qad,qnd->qna", frames.B, ref_grads)


def chart_gradient_derivatives(frames: ElementFrames, ref_grads, ref_hess):
    """Reference derivatives W[q,n,c,j] = d/dxi_j of the gradient field components."""
    a = np.einsum("qde,qne->qnd", frames.Ginv, ref_grads)
    rhs = ref_hess - np.einsum("qefj,qnf->qnej", frames.dG, a)
    da = np.einsum("qde,qnej->qndj", frames.Ginv, rhs)
    W = np.einsum("qcdj,qnd->qncj", frames.DF2, a) + np.einsum(
        "qcd,qndj->qncj", frames.DF, da
    )
    return a, W


def hessian_tables(frames: ElementFrames, ref_grads, ref_hess) -> np.ndarray:
    """Projected surface Hessians, shape (Q, n, 3, 3)."""
    _, W = chart_gradient_derivatives(frames, ref_grads, ref_hess)
    D = np.einsum("qncj,qbj->qncb", W, frames.B)
    return np.einsum("qac,qncb,qbd->qnad", frames.P, D, frames.P)


def hess_like_tables(frames: ElementFrames, ref_grads, ref_hess) -> np.ndarray:
    """Bending operator H applied to each basis function, shape (Q, n, 3, 3)."""
    M = hessian_tables(frames, ref_grads, ref_hess)
    K = skew(frames.n)
    return 0.5 * (
        np.einsum("qab,qnbc->qnac", K, M) - np.einsum("qnab,qbc->qnac", M, K)
    )


def curl_tables(frames: ElementFrames, ref_grads) -> np.ndarray:
    """Tangential curls n x grad, shape (Q, n, 3)."""
    g = gradient_tables(frames, ref_grads)
    return np.cross(frames.n[:, None, :], g)


def curl_deformation_tables(frames: ElementFrames, ref_grads, ref_hess) -> np.ndarray:
    """Deformation tensor of the surface-curl field, computed independently.

    Differentiates the curl field n x grad through the chart (including the
    variation of the discrete normal) and symmetrizes its tangential
    Jacobian.  Used as a cross-check of :func:`hess_like_tables`.
    """
    g = gradient_tables(frames, ref_grads)
    _, W = chart_gradient_derivatives(frames, ref_grads, ref_hess)
    # d/dxi_j (n x g) = dn_j x g + n x dg_j
    Wc = np.empty_like(W)
    for j in range(2):
        Wc[:, :, :, j] = np.cross(frames.dn[:, None, :, j], g) + np.cross(
            frames.n[:, None, :], W[:, :, :, j]
        )
    D = np.einsum("qncj,qbj->qncb", Wc, frames.B)
    Jt = np.einsum("qac,qncb->qnab", frames.P, D)
    return 0.5 * (Jt + Jt.transpose(0, 1, 3, 2))


def _combine(coeffs, ref_tables):
    vals, grads, hess = ref_tables
    c = np.asarray(coeffs, dtype=float)
    return (
        np.einsum("qn,n->q", vals, c)[:, None],
        np.einsum("qnd,n->qd", grads, c)[:, None, :],
        np.einsum("qnde,n->qde", hess, c)[:, None, :, :],
    )


# -- single-point operations on coefficient vectors ------------------------


def surface_gradient(coeffs, basis: ReferenceBasis, frame: GeometryFrame) -> np.ndarray:
    """Tangential gradient of the local FE function at the frame's point."""
    _, g, _ = _combine(coeffs, basis.eval(frame.xi[None, :]))
    return gradient_tables(frame.batch, g)[0, 0]


def surface_hessian(coeffs, basis: ReferenceBasis, frame: GeometryFrame) -> np.ndarray:
    """Projected surface Hessian of the local FE function (3 x 3, symmetric)."""
    _, g, h = _combine(coeffs, basis.eval(frame.xi[None, :]))
    return hessian_tables(frame.batch, g, h)[0, 0]


def hess_like(coeffs, basis: ReferenceBasis, frame: GeometryFrame) -> np.ndarray:
    """Bending operator H of the local FE function (symmetric, trace free)."""
    _, g, h = _combine(coeffs, basis.eval(frame.xi[None, :]))
    return hess_like_tables(frame.batch, g, h)[0, 0]


def surface_curl(coeffs, basis: ReferenceBasis, frame: GeometryFrame) -> np.ndarray:
    """Tangential curl n x grad of the local FE function."""
    _, g, _ = _combine(coeffs, basis.eval(frame.xi[None, :]))
    return curl_tables(frame.batch, g)[0, 0]


def verify_hess_like_equiv(coeffs, basis: ReferenceBasis, frame: GeometryFrame) -> float:
    """Frobenius residual between the two routes to the bending operator."""
    _, g, h = _combine(coeffs, basis.eval(frame.xi[None, :]))
    H1 = hess_like_tables(frame.batch, g, h)[0, 0]
    H2 = curl_deformation_tables(frame.batch, g, h)[0, 0]
    return float(np.linalg.norm(H1 - H2))


# -- edge frames ------------------------------------------------------------


@dataclass
class EdgeFrame:
    """Frame of one element-side of an edge at one parameter value.

    ``t_e`` follows the convention t = n x mu, so the tangents seen from the
    two sides of a flat edge are antiparallel while the shared physical
    parametrization (low global vertex to high) is identical.
    """

    x: np.ndarray
    t_e: np.ndarray
    n_h: np.ndarray
    mu: np.ndarray
    arc: float


@dataclass
class EdgeFramesBatch:
    """Vectorized edge-side frames at a batch of parameter values."""

    element: int
    xi: np.ndarray       # (Q, 2) reference points along the edge
    x: np.ndarray        # (Q, 3)
    t_e: np.ndarray      # (Q, 3)
    n: np.ndarray        # (Q, 3)
    mu: np.ndarray       # (Q, 3)
    arc: np.ndarray      # (Q,)
    frames: ElementFrames


def edge_side_reference(mesh: MappedMesh, e: int, side: int):
    """Local-vertex layout of edge ``e`` seen from ``side`` (0 or 1).

    Returns (element, loc_lo, loc_hi, loc_opp) where lo/hi follow the global
    edge orientation (low vertex index to high), so both sides traverse the
    shared edge curve identically.
    """
    base = mesh.base
    t = int(base.edge_tris[e, side])
    lo, hi = (int(v) for v in base.edge_vertices[e])
    tri = [int(v) for v in base.triangles[t]]
    loc_lo, loc_hi = tri.index(lo), tri.index(hi)
    return t, loc_lo, loc_hi, 3 - loc_lo - loc_hi


def edge_reference_points(loc_lo: int, loc_hi: int, s: np.ndarray) -> np.ndarray:
    """Reference coordinates along the edge at parameters ``s``."""
    xi_a, xi_b = REF_VERTICES[loc_lo], REF_VERTICES[loc_hi]
    return xi_a[None, :] * (1.0 - s)[:, None] + xi_b[None, :] * s[:, None]


def side_conormal(fr: ElementFrames, loc_lo: int, loc_hi: int, loc_opp: int):
    """(t_e, mu, arc) of one element side along an edge.

    ``mu`` is the outward unit co-normal, ``t_e = n x mu`` and ``arc`` the
    speed |dx/ds| of the shared edge parametrization.
    """
    xi_a, xi_b = REF_VERTICES[loc_lo], REF_VERTICES[loc_hi]
    dxds = np.einsum("qad,d->qa", fr.DF, xi_b - xi_a)
    arc = np.linalg.norm(dxds, axis=1)
    tang = dxds / arc[:, None]
    mu = np.cross(tang, fr.n)
    mu /= np.linalg.norm(mu, axis=1)[:, None]
    # orient mu out of the element: flip where it points towards the
    # opposite vertex
    inward = np.einsum(
        "qad,d->qa", fr.DF, REF_VERTICES[loc_opp] - 0.5 * (xi_a + xi_b)
    )
    flip = np.einsum("qa,qa->q", mu, inward) > 0.0
    mu[flip] *= -1.0
    t_e = np.cross(fr.n, mu)
    return t_e, mu, arc


def edge_frames(mesh: MappedMesh, e: int, side: int, s, geom_basis=None) -> EdgeFramesBatch:
    """Edge-side frames at parameter values ``s`` in [0, 1]."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t, loc_lo, loc_hi, loc_opp = edge_side_reference(mesh, e, side)
    xi = edge_reference_points(loc_lo, loc_hi, s)
    fr = element_frames(mesh, t, xi, geom_basis)
    t_e, mu, arc = side_conormal(fr, loc_lo, loc_hi, loc_opp)
    return EdgeFramesBatch(t, xi, fr.x, t_e, fr.n, mu, arc, fr)


def edge_frame(mesh: MappedMesh, e: int, side: int, s: float) -> EdgeFrame:
    """Frame of one side of edge ``e`` at a single parameter value."""
    fb = edge_frames(mesh, e, side, float(s))
    return EdgeFrame(fb.x[0], fb.t_e[0], fb.n[0], fb.mu[0], float(fb.arc[0]))
