"""Closed triangulations of level-set surfaces and their curved liftings.

The base mesh is an octahedron inscribed in the surface (its six vertices
lie on the surface exactly), uniformly 4-split with every new vertex pushed
onto the surface.  The mapped mesh attaches, per triangle, the Lagrange
geometry nodes of degree ``k_g``, each obtained by projecting the affine
lattice point onto the surface.  Nodes shared by two triangles are stored
once and referenced from both sides, which makes shared edge curves
bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import LevelSetSurface, project_to_surface

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local edge l of a triangle (a, b, c): vertex pairs (a,b), (b,c), (c,a)
LOCAL_EDGE_VERTICES = ((0, 1), (1, 2), (2, 0))


class NonManifoldError(ValueError):
    """An edge of the triangulation is not shared by exactly two triangles."""


@dataclass
class BaseMesh:
    """Affine triangulation with all vertices on the surface.

    ``edge_vertices`` holds (lo, hi) vertex indices with lo < hi,
    ``edge_tris`` the (left, right) incident triangles in discovery order and
    ``edge_local`` the local edge index of the edge within each of them.
    """

    vertices: np.ndarray          # (V, 3)
    triangles: np.ndarray         # (F, 3) with consistent outward orientation
    edge_vertices: np.ndarray     # (E, 2)
    edge_tris: np.ndarray         # (E, 2)
    edge_local: np.ndarray        # (E, 2)
    level: int

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_vertices.shape[0]

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    def triangle_diameters(self) -> np.ndarray:
        v = self.vertices[self.triangles]  # (F, 3, 3)
        d01 = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
        d12 = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
        d20 = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
        return np.max(np.stack([d01, d12, d20]), axis=0)

    def edge_lengths(self) -> np.ndarray:
        lo = self.vertices[self.edge_vertices[:, 0]]
        hi = self.vertices[self.edge_vertices[:, 1]]
        return np.linalg.norm(hi - lo, axis=1)


def _build_edges(triangles: np.ndarray):
    lookup: dict[tuple[int, int], int] = {}
    ev, et, el = [], [], []
    for t, tri in enumerate(triangles):
        for loc, (p, q) in enumerate(LOCAL_EDGE_VERTICES):
            a, b = int(tri[p]), int(tri[q])
            key = (a, b) if a < b else (b, a)
            if key not in lookup:
                lookup[key] = len(ev)
                ev.append(key)
                et.append([t, -1])
                el.append([loc, -1])
            else:
                e = lookup[key]
                if et[e][1] != -1:
                    raise NonManifoldError(f"edge {key} shared by more than two triangles")
                et[e][1] = t
                el[e][1] = loc
    et = np.array(et)
    if np.any(et[:, 1] == -1):
        raise NonManifoldError("open edge found; the triangulation is not closed")
    return np.array(ev), et, np.array(el)


def _octahedron(surface: LevelSetSurface) -> BaseMesh:
    vertices = surface.octahedron_vertices()
    # +x1 = 0, -x1 = 1, +x2 = 2, -x2 = 3, +x3 = 4, -x3 = 5; outward CCW faces
    triangles = np.array(
        [
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ]
    )
    ev, et, el = _build_edges(triangles)
    return BaseMesh(vertices, triangles, ev, et, el, level=0)


def refine(surface: LevelSetSurface, mesh: BaseMesh) -> BaseMesh:
    """One uniform 4-split with edge midpoints projected onto the surface."""
    mid = 0.5 * (
        mesh.vertices[mesh.edge_vertices[:, 0]] + mesh.vertices[mesh.edge_vertices[:, 1]]
    )
    mid = project_to_surface(surface, mid)
    vertices = np.vstack([mesh.vertices, mid])

    # global index of the midpoint of edge (lo, hi)
    midpoint_of = {
        (int(lo), int(hi)): mesh.n_vertices + e
        for e, (lo, hi) in enumerate(mesh.edge_vertices)
    }

    def mid_index(a, b):
        return midpoint_of[(a, b) if a < b else (b, a)]

    tris = []
    for a, b, c in mesh.triangles:
        a, b, c = int(a), int(b), int(c)
        mab, mbc, mca = mid_index(a, b), mid_index(b, c), mid_index(c, a)
        tris.extend([(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)])
    triangles = np.array(tris)
    ev, et, el = _build_edges(triangles)
    return BaseMesh(vertices, triangles, ev, et, el, level=mesh.level + 1)


def build_base_mesh(surface: LevelSetSurface, level: int) -> BaseMesh:
    """Octahedron inscribed in the surface, 4-split ``level`` times."""
    if level < 0:
        raise ValueError("refinement level must be non-negative")
    mesh = _octahedron(surface)
    for _ in range(level):
        mesh = refine(surface, mesh)
    return mesh


# -- Lagrange lattice numbering --------------------------------------------


def lattice_multi_indices(degree: int) -> np.ndarray:
    """Lattice exponents (i, j) with i + j <= degree, lexicographic order."""
    return np.array([(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)])


@dataclass
class NodeNumbering:
    """Global numbering of the degree-``degree`` lattice nodes on a base mesh.

    Vertex nodes come first (equal to vertex indices), then ``degree - 1``
    interior nodes per edge ordered from the low-index vertex to the high
    one, then the per-triangle interior nodes.
    """

    degree: int
    element_nodes: np.ndarray    # (F, n_lattice)
    n_total: int
    multi_indices: np.ndarray    # (n_lattice, 2)


def global_node_numbering(base: BaseMesh, degree: int) -> NodeNumbering:
    if degree < 1:
        raise ValueError("lattice degree must be at least 1")
    k = degree
    mi = lattice_multi_indices(k)
    n_lat = len(mi)
    V, E, F = base.n_vertices, base.n_edges, base.n_triangles
    per_edge = k - 1
    per_face = (k - 1) * (k - 2) // 2

    edge_of = {
        (int(lo), int(hi)): e for e, (lo, hi) in enumerate(base.edge_vertices)
    }

    element_nodes = np.empty((F, n_lat), dtype=int)
    for t, tri in enumerate(base.triangles):
        va, vb, vc = (int(v) for v in tri)
        interior_seen = 0
        for m, (i, j) in enumerate(mi):
            i, j = int(i), int(j)
            if i == 0 and j == 0:
                g = va
            elif i == k and j == 0:
                g = vb
            elif i == 0 and j == k:
                g = vc
            elif j == 0:                      # edge (va, vb), parameter i/k from va
                g = _edge_slot(edge_of, V, per_edge, va, vb, i, k)
            elif i == 0:                      # edge (va, vc), parameter j/k from va
                g = _edge_slot(edge_of, V, per_edge, va, vc, j, k)
            elif i + j == k:                  # edge (vb, vc), parameter j/k from vb
                g = _edge_slot(edge_of, V, per_edge, vb, vc, j, k)
            else:
                g = V + E * per_edge + t * per_face + interior_seen
                interior_seen += 1
            element_nodes[t, m] = g
    n_total = V + E * per_edge + F * per_face
    return NodeNumbering(k, element_nodes, n_total, mi)


def _edge_slot(edge_of, V, per_edge, v_from, v_to, t, k):
    lo, hi = (v_from, v_to) if v_from < v_to else (v_to, v_from)
    e = edge_of[(lo, hi)]
    slot = t - 1 if v_from == lo else (k - t) - 1
    return V + e * per_edge + slot


def affine_node_positions(base: BaseMesh, numbering: NodeNumbering) -> np.ndarray:
    """Positions of all global lattice nodes on the affine base mesh."""
    k = numbering.degree
    pos = np.empty((numbering.n_total, 3))
    V = base.n_vertices
    pos[:V] = base.vertices
    per_edge = k - 1
    if per_edge > 0:
        t = np.arange(1, k) / k
        lo = base.vertices[base.edge_vertices[:, 0]]
        hi = base.vertices[base.edge_vertices[:, 1]]
        # (E, k-1, 3): walk each edge from its low-index vertex to the high one
        edge_pts = lo[:, None, :] * (1.0 - t)[None, :, None] + hi[:, None, :] * t[None, :, None]
        pos[V : V + base.n_edges * per_edge] = edge_pts.reshape(-1, 3)
    per_face = (k - 1) * (k - 2) // 2
    if per_face > 0:
        mi = numbering.multi_indices
        interior = [(int(i), int(j)) for i, j in mi if 0 < i and 0 < j and i + j < k]
        lam = np.array([[(k - i - j) / k, i / k, j / k] for i, j in interior])
        corners = base.vertices[base.triangles]  # (F, 3, 3)
        face_pts = np.einsum("ml,fla->fma", lam, corners)
        pos[V + base.n_edges * per_edge :] = face_pts.reshape(-1, 3)
    return pos


@dataclass
class MappedMesh:
    """Curved mesh: base triangulation plus degree-``k_g`` geometry nodes."""

    base: BaseMesh
    k_g: int
    points: np.ndarray            # (n_nodes, 3), all on the surface
    element_nodes: np.ndarray     # (F, N_{k_g}) indices into ``points``
    h_per_element: np.ndarray     # base triangle diameters
    surface: LevelSetSurface
    numbering: NodeNumbering = field(repr=False, default=None)

    @property
    def n_elements(self) -> int:
        return self.base.n_triangles

    def element_geometry_nodes(self, t: int) -> np.ndarray:
        return self.points[self.element_nodes[t]]


def build_mapped_mesh(surface: LevelSetSurface, base: BaseMesh, k_g: int) -> MappedMesh:
    """Project the affine lattice nodes onto the surface, sharing edge nodes."""
    if k_g < 1:
        raise ValueError("geometric degree must be at least 1")
    numbering = global_node_numbering(base, k_g)
    points = project_to_surface(surface, affine_node_positions(base, numbering))
    return MappedMesh(
        base=base,
        k_g=k_g,
        points=points,
        element_nodes=numbering.element_nodes,
        h_per_element=base.triangle_diameters(),
        surface=surface,
        numbering=numbering,
    )


def mesh_size(mesh: MappedMesh) -> tuple[float, float]:
    """(h_max, h_min) over base triangle diameters."""
    h = mesh.h_per_element
    return float(h.max()), float(h.min())


def dump_off(base: BaseMesh, path) -> None:
    """Plain-text OFF listing of the base mesh (17 significant digits)."""
    with open(path, "w", encoding="ascii") as f:
        f.write("OFF\n")
        f.write(f"{base.n_vertices} {base.n_triangles} {base.n_edges}\n")
        for v in base.vertices:
            f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for tri in base.triangles:
            f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
