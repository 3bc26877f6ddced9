"""Assembly of the interior-penalty system, mean constraint and load vector.

The bilinear form combines, per element, the bending-energy and gradient
terms and, per interior edge, the consistency/symmetry couplings of the
averaged co-normal bending trace with the gradient jump plus the scaled
gradient-jump penalty.  Both symmetry partners of every edge term come out
of one kernel and local matrices are mirrored, so the assembled matrix is
exactly symmetric entry by entry.  The penalty block is kept separate from
the rest (scaled by ``sigma`` only when the combined matrix is formed),
which makes penalty-scaling checks and sign-injection controls cheap.

The manufactured force evaluates the momentum balance

    f = -P div_T(E(u)) + u + P grad p,      u = n x (P grad phi),

entirely in third-order jet arithmetic of the level-set and solution
fields, so the forcing is exact wherever the fields are.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .fe_space import FeSpace, edge_quadrature, reference_basis, triangle_quadrature
from .geometry import LevelSetSurface, eval_level_set
from .jets import X1, X2, X3, Const, FieldExpr, Jet3
from .linalg import SparseSymmetricMatrix
from .mesh import MappedMesh
from .surface_ops import (
    curl_tables,
    edge_reference_points,
    edge_side_reference,
    element_frames,
    gradient_tables,
    hess_like_tables,
    side_conormal,
)


def stream_solution() -> FieldExpr:
    """Manufactured stream function exp(x1) (cos(x2) + x3)."""
    return jets.exp(X1) * (jets.cos(X2) + X3)


def pressure_solution() -> FieldExpr:
    """Manufactured pressure x1 x2 x3."""
    return X1 * X2 * X3


def rotation_stream() -> FieldExpr:
    """Stream function x3, whose sphere velocity is the rigid rotation x cross e3."""
    return 1.0 * X3


def manufactured_problem(name: str) -> tuple[FieldExpr, FieldExpr]:
    """(stream, pressure) data selected by name."""
    if name == "exponential":
        return stream_solution(), pressure_solution()
    if name == "rotation":
        return rotation_stream(), Const(0.0)
    raise ValueError(f"unknown manufactured problem {name!r}")


# -- jet machinery for the manufactured fields ------------------------------


def _jet_cross(a, b):
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]


def _normal_jets(surface: LevelSetSurface, x):
    psi = eval_level_set(surface, x, order=3)
    dpsi = [psi.derivative(a) for a in range(3)]
    gnorm = (dpsi[0] * dpsi[0] + dpsi[1] * dpsi[1] + dpsi[2] * dpsi[2]).sqrt()
    inv = gnorm.reciprocal()
    return [d * inv for d in dpsi]


def velocity_jets(surface: LevelSetSurface, x, stream: FieldExpr | None = None):
    """Jets (valid to second order) of u = n x (P grad phi) and of n itself."""
    if stream is None:
        stream = stream_solution()
    x = np.asarray(x, dtype=float)
    n = _normal_jets(surface, x)
    phi = stream.jet(Jet3.coordinates(x))
    dphi = [phi.derivative(a) for a in range(3)]
    ndot = n[0] * dphi[0] + n[1] * dphi[1] + n[2] * dphi[2]
    w = [dphi[a] - n[a] * ndot for a in range(3)]
    return _jet_cross(n, w), n


def velocity_values(surface: LevelSetSurface, x, stream: FieldExpr | None = None) -> np.ndarray:
    """Ambient closed-form velocity values at points ``x``."""
    u, _ = velocity_jets(surface, x, stream)
    return np.stack([c.value for c in u], axis=-1)


def manufactured_force(
    surface: LevelSetSurface,
    x,
    stream: FieldExpr | None = None,
    pressure: FieldExpr | None = None,
) -> np.ndarray:
    """Force of the momentum balance at ambient points ``x``.

    All tangential operators are built from the level-set normal, so on the
    surface the result is the exact (tangential) forcing; nearby it is the
    canonical closed-form extension used on discrete surfaces.
    """
    if stream is None:
        stream = stream_solution()
    if pressure is None:
        pressure = pressure_solution()
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x

    u, n = velocity_jets(surface, pts, stream)
    nv = np.stack([c.value for c in n], axis=-1)
    proj = np.eye(3) - np.einsum("...a,...b->...ab", nv, nv)

    # tangential deformation tensor E = (P (grad u) P + transpose) / 2 as jets
    pjet = [[(1.0 if a == b else 0.0) - n[a] * n[b] for b in range(3)] for a in range(3)]
    du = [[u[a].derivative(b) for b in range(3)] for a in range(3)]
    t1 = [
        [sum((du[c][d] * pjet[d][b] for d in range(1, 3)), du[c][0] * pjet[0][b]) for b in range(3)]
        for c in range(3)
    ]
    pdp = [
        [sum((pjet[a][c] * t1[c][b] for c in range(1, 3)), pjet[a][0] * t1[0][b]) for b in range(3)]
        for a in range(3)
    ]
    e_grad = np.empty(pts.shape[:-1] + (3, 3, 3))
    for a in range(3):
        for b in range(3):
            e_grad[..., a, b, :] = 0.5 * (pdp[a][b].grad + pdp[b][a].grad)

    # row-wise tangential divergence of E, then assemble the balance
    div_e = np.einsum("...jb,...ijb->...i", proj, e_grad)
    uval = np.stack([c.value for c in u], axis=-1)
    pj = pressure.jet(Jet3.coordinates(pts))
    grad_p = pj.grad
    f = -np.einsum("...ij,...j->...i", proj, div_e) + uval + np.einsum(
        "...ij,...j->...i", proj, grad_p
    )
    return f[0] if single else f


# -- system assembly ---------------------------------------------------------


@dataclass
class AssembledSystem:
    """Assembled operator, mean-value constraint and metadata.

    ``core_values`` and ``penalty_values`` share the CSR pattern of
    ``matrix``; the combined operator is core + sigma * penalty.
    """

    matrix: SparseSymmetricMatrix
    mean_vector: np.ndarray
    sigma: float
    core_values: np.ndarray
    penalty_values: np.ndarray
    meta: dict = field(default_factory=dict)
    rhs: np.ndarray | None = None

    def matrix_with_sigma(self, sigma: float) -> SparseSymmetricMatrix:
        return SparseSymmetricMatrix(
            self.matrix.indptr,
            self.matrix.indices,
            self.core_values + sigma * self.penalty_values,
        )


def _csr_pattern(ndof: int, blocks):
    keys = [
        (np.repeat(b, len(b)).astype(np.int64) * ndof + np.tile(b, len(b))).ravel()
        for b in blocks
    ]
    sorted_keys = np.unique(np.concatenate(keys))
    rows = sorted_keys // ndof
    cols = sorted_keys % ndof
    indptr = np.searchsorted(rows, np.arange(ndof + 1), side="left")
    return indptr, cols, sorted_keys


def _block_positions(sorted_keys: np.ndarray, ndof: int, dofs: np.ndarray) -> np.ndarray:
    kk = (np.repeat(dofs, len(dofs)).astype(np.int64) * ndof + np.tile(dofs, len(dofs)))
    return np.searchsorted(sorted_keys, kk)


def _mirror(local: np.ndarray) -> np.ndarray:
    # force exact entrywise symmetry of a local kernel
    lower = np.tril(local)
    return lower + np.tril(local, -1).T


def assemble_system(
    mesh: MappedMesh,
    space: FeSpace,
    sigma: float,
    quad_order: int | None = None,
) -> AssembledSystem:
    """Assemble the operator and the mean-value constraint vector."""
    if sigma <= 0.0:
        raise ValueError("penalty parameter must be positive")
    k = space.k
    order = quad_order if quad_order is not None else 2 * k + 2
    tri_rule = triangle_quadrature(order)
    edge_rule = edge_quadrature(order)
    geom_basis = reference_basis(mesh.k_g)
    geom_tab = geom_basis.eval(tri_rule.points)
    ref_vals, ref_grads, ref_hess = space.basis.eval(tri_rule.points)

    base = mesh.base
    elem_dofs = space.dofs.element_dofs
    # deduplicated union of the two elements' dofs per edge; local kernels are
    # condensed onto it so every global pair receives exactly one update per
    # edge, which keeps the assembled matrix exactly symmetric
    edge_blocks, edge_inverse = [], []
    for e in range(base.n_edges):
        both = np.concatenate(
            [elem_dofs[base.edge_tris[e, 0]], elem_dofs[base.edge_tris[e, 1]]]
        )
        uni, inv = np.unique(both, return_inverse=True)
        edge_blocks.append(uni)
        edge_inverse.append(inv)
    ndof = space.ndof
    indptr, indices, sorted_keys = _csr_pattern(
        ndof, [elem_dofs[t] for t in range(base.n_triangles)] + edge_blocks
    )
    core = np.zeros(len(indices))
    pen = np.zeros(len(indices))
    cvec = np.zeros(ndof)

    for t in range(base.n_triangles):
        fr = element_frames(mesh, t, tri_rule.points, tables=geom_tab)
        w = tri_rule.weights * fr.J
        sq = np.sqrt(w)
        hb = hess_like_tables(fr, ref_grads, ref_hess) * sq[:, None, None, None]
        gb = gradient_tables(fr, ref_grads) * sq[:, None, None]
        local = np.einsum("qnab,qmab->nm", hb, hb) + np.einsum("qna,qma->nm", gb, gb)
        pos = _block_positions(sorted_keys, ndof, elem_dofs[t])
        np.add.at(core, pos, _mirror(local).ravel())
        np.add.at(cvec, elem_dofs[t], np.einsum("q,qn->n", w, ref_vals))

    # field and geometry tables along each of the six oriented local segments
    seg_cache = {}

    def segment_tables(loc_lo, loc_hi):
        key = (loc_lo, loc_hi)
        if key not in seg_cache:
            xi = edge_reference_points(loc_lo, loc_hi, edge_rule.points)
            seg_cache[key] = (xi, geom_basis.eval(xi), space.basis.eval(xi))
        return seg_cache[key]

    edge_lengths = base.edge_lengths()
    for e in range(base.n_edges):
        h_e = edge_lengths[e]
        avg_rows, jump_rows, arcs = [], [], None
        for side in range(2):
            t, loc_lo, loc_hi, loc_opp = edge_side_reference(mesh, e, side)
            xi, geom_tabs, (fvals, fgrads, fhess) = segment_tables(loc_lo, loc_hi)
            fr = element_frames(mesh, t, xi, tables=geom_tabs)
            t_e, mu, arc = side_conormal(fr, loc_lo, loc_hi, loc_opp)
            if side == 0:
                arcs = arc
            hb = hess_like_tables(fr, fgrads, fhess)
            gb = gradient_tables(fr, fgrads)
            avg_rows.append(np.einsum("qa,qnab,qb->qn", t_e, hb, mu))
            jump_rows.append(np.einsum("qna,qa->qn", gb, mu))
        w = edge_rule.weights * arcs
        avg = 0.5 * np.concatenate(avg_rows, axis=1)
        jump = np.concatenate(jump_rows, axis=1)
        local_core = -(
            np.einsum("q,qn,qm->nm", w, avg, jump)
            + np.einsum("q,qn,qm->nm", w, jump, avg)
        )
        local_pen = np.einsum("q,qn,qm->nm", w, jump, jump) / h_e
        inv = edge_inverse[e]
        m = len(edge_blocks[e])
        cond_core = np.zeros((m, m))
        cond_pen = np.zeros((m, m))
        np.add.at(cond_core, (inv[:, None], inv[None, :]), local_core)
        np.add.at(cond_pen, (inv[:, None], inv[None, :]), local_pen)
        pos = _block_positions(sorted_keys, ndof, edge_blocks[e])
        np.add.at(core, pos, _mirror(cond_core).ravel())
        np.add.at(pen, pos, _mirror(cond_pen).ravel())

    matrix = SparseSymmetricMatrix(indptr, indices, core + sigma * pen)
    meta = {
        "k": k,
        "k_g": mesh.k_g,
        "level": base.level,
        "quad_order": order,
        "edge_quad_order": order,
    }
    return AssembledSystem(matrix, cvec, float(sigma), core, pen, meta)


def assemble_rhs(mesh: MappedMesh, space: FeSpace, force, quad_order: int | None = None) -> np.ndarray:
    """Load vector b_i = integral of f . (n x grad phi_i) over the mesh.

    ``force`` maps quadrature points (Q, 3) to vectors (Q, 3); it may take a
    second positional argument to receive the discrete element normals.
    """
    order = quad_order if quad_order is not None else 2 * space.k + 2
    tri_rule = triangle_quadrature(order)
    geom_tab = reference_basis(mesh.k_g).eval(tri_rule.points)
    _, ref_grads, _ = space.basis.eval(tri_rule.points)
    positional = [
        p
        for p in inspect.signature(force).parameters.values()
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD, p.VAR_POSITIONAL)
    ]
    wants_normals = len(positional) >= 2

    b = np.zeros(space.ndof)
    for t in range(mesh.n_elements):
        fr = element_frames(mesh, t, tri_rule.points, tables=geom_tab)
        w = tri_rule.weights * fr.J
        fvals = force(fr.x, fr.n) if wants_normals else force(fr.x)
        curls = curl_tables(fr, ref_grads)
        np.add.at(
            b,
            space.dofs.element_dofs[t],
            np.einsum("q,qa,qna->n", w, np.asarray(fvals, float), curls),
        )
    return b
