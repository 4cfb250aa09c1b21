"""Lagrange elements on triangles and segments, quadrature rules and DOF maps."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import UnsupportedDegree, UnsupportedOrder
from .mesh import (DIRICHLET_F, DIRICHLET_P, DIRICHLET_S, InterfaceMesh,
                   SubdomainMesh)

TRIANGLE = "triangle"
SEGMENT = "segment"
LAGRANGE = "Lagrange"
MAX_ORDER = 6


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (n, dim) reference coordinates
    weights: np.ndarray  # (n,) summing to the reference measure
    order: int


def quadrature_rule(cell: str, order: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree <= ``order`` on the reference cell.

    Reference triangle is (0,0),(1,0),(0,1) with area 1/2; reference segment is [0, 1].
    """
    if order < 0 or order > MAX_ORDER:
        raise UnsupportedOrder(f"quadrature order {order} not in 0..{MAX_ORDER}")
    n = max(1, ceil((order + 1) / 2))
    if cell == SEGMENT:
        x, w = roots_legendre(n)
        return QuadratureRule(((x + 1) / 2)[:, None], w / 2, order)
    if cell != TRIANGLE:
        raise ValueError(f"unknown cell {cell!r}")
    if order <= 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), order)
    if order == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return QuadratureRule(pts, np.full(3, 1 / 6), order)
    # collapsed Gauss: a in [0,1] Legendre, b in [0,1] Jacobi(1,0) absorbing the (1-b) Jacobian
    xa, wa = roots_legendre(n)
    xb, wb = roots_jacobi(n, 1.0, 0.0)
    a, wa = (xa + 1) / 2, wa / 2
    b, wb = (xb + 1) / 2, wb / 4
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa, wb)
    pts = np.column_stack([(A * (1 - B)).ravel(), B.ravel()])
    return QuadratureRule(pts, W.ravel(), order)


def n_local(cell: str, degree: int) -> int:
    if degree not in (0, 1, 2):
        raise UnsupportedDegree(f"degree {degree} not in (0, 1, 2)")
    if cell == TRIANGLE:
        return (1, 3, 6)[degree]
    return (1, 2, 3)[degree]


def tabulate(cell: str, degree: int, pts) -> tuple[np.ndarray, np.ndarray]:
    """Scalar basis values (npts, nb) and reference gradients (npts, nb, dim).

    Triangle P2 ordering: vertices 0..2, then midpoints of local edges
    e0=(v1,v2), e1=(v2,v0), e2=(v0,v1). Segment P2: endpoints, then midpoint.
    """
    n_local(cell, degree)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    npt = len(pts)
    if cell == SEGMENT:
        t = pts[:, 0]
        if degree == 0:
            return np.ones((npt, 1)), np.zeros((npt, 1, 1))
        if degree == 1:
            v = np.column_stack([1 - t, t])
            g = np.tile([-1.0, 1.0], (npt, 1))
        else:
            v = np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])
            g = np.column_stack([4 * t - 3, 4 * t - 1, 4 - 8 * t])
        return v, g[:, :, None]
    if cell != TRIANGLE:
        raise ValueError(f"unknown cell {cell!r}")
    x, y = pts[:, 0], pts[:, 1]
    if degree == 0:
        return np.ones((npt, 1)), np.zeros((npt, 1, 2))
    L = np.stack([1 - x - y, x, y], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return L, np.broadcast_to(dL, (npt, 3, 2)).copy()
    v = np.empty((npt, 6))
    g = np.empty((npt, 6, 2))
    for i in range(3):
        v[:, i] = L[:, i] * (2 * L[:, i] - 1)
        g[:, i] = (4 * L[:, i] - 1)[:, None] * dL[i]
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        v[:, 3 + k] = 4 * L[:, i] * L[:, j]
        g[:, 3 + k] = 4 * (L[:, i, None] * dL[j] + L[:, j, None] * dL[i])
    return v, g


def reference_basis(family: str, degree: int, components: int, point, cell: str = TRIANGLE):
    """Values and reference gradients of every basis function at one point.

    Scalar: values (nb,), gradients (nb, dim). Vector (components=2):
    interleaved basis, values (2nb, 2), gradients (2nb, 2, dim).
    """
    if family != LAGRANGE:
        raise UnsupportedDegree(f"unsupported family {family!r}")
    v, g = tabulate(cell, degree, np.asarray(point, dtype=float)[None, :])
    v, g = v[0], g[0]
    if components == 1:
        return v, g
    nb, dim = g.shape
    vals = np.zeros((components * nb, components))
    grads = np.zeros((components * nb, components, dim))
    for c in range(components):
        vals[c::components, c] = v
        grads[c::components, c, :] = g
    return vals, grads


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Lagrange space on a subdomain or interface mesh.

    ``cell_nodes`` holds scalar node ids per cell; vector DOFs are interleaved,
    ``dof = components * node + c``. Vertex nodes share the mesh vertex index.
    """

    mesh: object
    family: str
    degree: int
    components: int
    cell_nodes: np.ndarray
    node_coords: np.ndarray
    dirichlet_mask: np.ndarray

    @property
    def cell(self) -> str:
        return SEGMENT if isinstance(self.mesh, InterfaceMesh) else TRIANGLE

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def ndofs(self) -> int:
        return self.components * self.n_nodes

    @property
    def dofmap(self) -> np.ndarray:
        c = self.components
        return (c * self.cell_nodes[:, :, None] + np.arange(c)).reshape(len(self.cell_nodes), -1)

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet_mask)

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``; vector functions return a pair."""
        if self.degree == 0:
            raise UnsupportedDegree("nodal interpolation needs degree >= 1")
        x, y = self.node_coords[:, 0], self.node_coords[:, 1]
        vals = np.asarray(func(x, y), dtype=float)
        if self.components == 1:
            return np.broadcast_to(vals, x.shape).astype(float)
        out = np.empty(self.ndofs)
        for c in range(self.components):
            out[c::self.components] = np.broadcast_to(vals[c], x.shape)
        return out


def build_space(mesh, family: str, degree: int, components: int = 1,
                dirichlet_tags=()) -> FunctionSpace:
    if family != LAGRANGE:
        raise UnsupportedDegree(f"unsupported family {family!r}")
    dirichlet_tags = set(dirichlet_tags)
    if isinstance(mesh, InterfaceMesh):
        n_local(SEGMENT, degree)
        nseg = mesh.n_segments
        seg = mesh.segments
        if degree == 0:
            nodes = np.arange(nseg)[:, None]
            coords = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
        elif degree == 1:
            nodes = seg.copy()
            coords = mesh.nodes.copy()
        else:
            nodes = np.column_stack([seg, len(mesh.nodes) + np.arange(nseg)])
            coords = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])])
        mask = np.zeros(components * len(coords), dtype=bool)
        return FunctionSpace(mesh, family, degree, components, nodes, coords, mask)

    if not isinstance(mesh, SubdomainMesh):
        raise TypeError("mesh must be a SubdomainMesh or InterfaceMesh")
    n_local(TRIANGLE, degree)
    nv = mesh.n_vertices
    if degree == 0:
        nodes = np.arange(mesh.n_triangles)[:, None]
        coords = mesh.vertices[mesh.triangles].mean(axis=1)
    elif degree == 1:
        nodes = mesh.triangles.copy()
        coords = mesh.vertices.copy()
    else:
        nodes = np.column_stack([mesh.triangles, nv + mesh.triangle_edges])
        coords = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])
    node_mask = np.zeros(len(coords), dtype=bool)
    if degree >= 1:
        for (a, b), tags in mesh.boundary_edges.items():
            if dirichlet_tags & set(tags):
                node_mask[[a, b]] = True
                if degree == 2:
                    node_mask[nv + mesh.edge_index[(a, b)]] = True
    mask = np.repeat(node_mask, components)
    return FunctionSpace(mesh, family, degree, components, nodes, coords, mask)


@dataclass(frozen=True, eq=False)
class Spaces:
    """The seven discrete spaces of the coupled problem."""

    U: FunctionSpace
    Qf: FunctionSpace
    X: FunctionSpace
    Qp: FunctionSpace
    G1: FunctionSpace
    G2: FunctionSpace
    L: FunctionSpace
    mesh_f: SubdomainMesh
    mesh_p: SubdomainMesh
    iface: InterfaceMesh


def build_spaces(mesh_f, mesh_p, iface) -> Spaces:
    """Taylor-Hood pairs in both subdomains, P0/P0/continuous-P1 multipliers on the interface."""
    return Spaces(
        U=build_space(mesh_f, LAGRANGE, 2, 2, {DIRICHLET_F}),
        Qf=build_space(mesh_f, LAGRANGE, 1, 1),
        X=build_space(mesh_p, LAGRANGE, 2, 2, {DIRICHLET_S}),
        Qp=build_space(mesh_p, LAGRANGE, 1, 1, {DIRICHLET_P}),
        G1=build_space(iface, LAGRANGE, 0, 1),
        G2=build_space(iface, LAGRANGE, 0, 1),
        L=build_space(iface, LAGRANGE, 1, 1),
        mesh_f=mesh_f, mesh_p=mesh_p, iface=iface,
    )


@dataclass(frozen=True)
class CellGeometry:
    """Affine maps x = origin + J xi for every triangle."""

    origin: np.ndarray  # (T, 2)
    J: np.ndarray       # (T, 2, 2)
    det: np.ndarray     # (T,)
    invJT: np.ndarray   # (T, 2, 2)


def triangle_geometry(mesh: SubdomainMesh) -> CellGeometry:
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1] / det
    invJT[:, 0, 1] = -J[:, 1, 0] / det
    invJT[:, 1, 0] = -J[:, 0, 1] / det
    invJT[:, 1, 1] = J[:, 0, 0] / det
    return CellGeometry(p[:, 0], J, det, invJT)


def map_points(geom: CellGeometry, ref_pts) -> np.ndarray:
    """Physical coordinates (T, nq, 2) of reference points on every cell."""
    return geom.origin[:, None, :] + np.einsum("tij,qj->tqi", geom.J, ref_pts)


def physical_gradients(geom: CellGeometry, ref_grads) -> np.ndarray:
    """Map reference gradients (nq, nb, 2) to physical ones (T, nq, nb, 2)."""
    return np.einsum("tij,qbj->tqbi", geom.invJT, ref_grads)


def evaluate(space: FunctionSpace, coeffs, ref_pts):
    """Values and physical gradients of a triangle-space function at reference points.

    Scalar: (T, nq) and (T, nq, 2); vector: (T, nq, 2) and (T, nq, 2, 2)
    with gradient index [component, direction].
    """
    geom = triangle_geometry(space.mesh)
    v, g = tabulate(TRIANGLE, space.degree, ref_pts)
    G = physical_gradients(geom, g)
    c = space.components
    loc = np.asarray(coeffs)[c * space.cell_nodes[:, :, None] + np.arange(c)]  # (T, nb, c)
    vals = np.einsum("qb,tbc->tqc", v, loc)
    grads = np.einsum("tqbd,tbc->tqcd", G, loc)
    if c == 1:
        return vals[..., 0], grads[..., 0, :]
    return vals, grads
