"""Structured triangulations of rectangular subdomains and their shared interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidRect, NonMatching, NotOnLine, OrientationError, ZeroCells

FLUID = "Fluid"
PORO = "Poro"

DIRICHLET_F = "DirichletF"
NEUMANN_F = "NeumannF"
DIRICHLET_S = "DirichletS"
NEUMANN_S = "NeumannS"
DIRICHLET_P = "DirichletP"
NEUMANN_P = "NeumannP"
INTERFACE = "Interface"

SIDES = ("bottom", "right", "top", "left")
_FLUID_TAGS = {DIRICHLET_F, NEUMANN_F}
_DISP_TAGS = {DIRICHLET_S, NEUMANN_S}
_PRES_TAGS = {DIRICHLET_P, NEUMANN_P}


@dataclass(frozen=True, eq=False)
class SubdomainMesh:
    """Triangulation of one subdomain.

    ``boundary_edges`` maps a sorted vertex pair to the tags carried by that
    edge: one tag in the fluid, a (displacement, pressure) pair in the poro
    domain, and ``("Interface",)`` on the shared interface in both.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: dict
    subdomain_id: str
    rect: tuple = field(default=(0.0, 0.0, 1.0, 1.0))

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_tables[0]

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """Edge ids per triangle; local edge k is opposite local vertex k."""
        return self._edge_tables[1]

    @cached_property
    def _edge_tables(self):
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @cached_property
    def edge_index(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges_with_tag(self, tag: str) -> list:
        return [e for e, tags in self.boundary_edges.items() if tag in tags]


def _normalize_tags(subdomain_id, tag_spec):
    out = {}
    for side in SIDES:
        if side not in tag_spec:
            raise ValueError(f"tag_spec is missing side {side!r}")
        tags = tag_spec[side]
        tags = (tags,) if isinstance(tags, str) else tuple(tags)
        if tags == (INTERFACE,):
            out[side] = tags
            continue
        if subdomain_id == FLUID:
            if len(tags) != 1 or tags[0] not in _FLUID_TAGS:
                raise ValueError(f"invalid fluid tags {tags} on {side}")
        elif subdomain_id == PORO:
            if (len(tags) != 2 or len(set(tags) & _DISP_TAGS) != 1
                    or len(set(tags) & _PRES_TAGS) != 1):
                raise ValueError(
                    f"poro side {side} needs one displacement and one pressure tag, got {tags}")
            tags = tuple(sorted(tags, key=lambda s: s not in _DISP_TAGS))
        else:
            raise ValueError(f"unknown subdomain {subdomain_id!r}")
        out[side] = tags
    return out


def build_rect_mesh(rect, nx: int, ny: int, subdomain_id: str, tag_spec) -> SubdomainMesh:
    """Criss-cross triangulation of ``rect = (x0, y0, x1, y1)`` with 2*nx*ny triangles.

    Each cell is split along its (x0, y0)-(x1, y1) diagonal.
    """
    if nx < 1 or ny < 1:
        raise ZeroCells(f"need nx, ny >= 1, got ({nx}, {ny})")
    x0, y0, x1, y1 = (float(v) for v in rect)
    if not (np.isfinite([x0, y0, x1, y1]).all() and x1 > x0 and y1 > y0):
        raise InvalidRect(f"degenerate rectangle {rect}")
    tags = _normalize_tags(subdomain_id, tag_spec)

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    tri = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tri[0::2] = np.column_stack([v00, v10, v11])
    tri[1::2] = np.column_stack([v00, v11, v01])

    def vid(a, b):
        return b * (nx + 1) + a

    boundary = {}
    for a in range(nx):
        boundary[tuple(sorted((vid(a, 0), vid(a + 1, 0))))] = tags["bottom"]
        boundary[tuple(sorted((vid(a, ny), vid(a + 1, ny))))] = tags["top"]
    for b in range(ny):
        boundary[tuple(sorted((vid(0, b), vid(0, b + 1))))] = tags["left"]
        boundary[tuple(sorted((vid(nx, b), vid(nx, b + 1))))] = tags["right"]
    return SubdomainMesh(vertices, tri, boundary, subdomain_id, (x0, y0, x1, y1))


@dataclass(frozen=True, eq=False)
class InterfaceMesh:
    """Matching 1D trace mesh of the fluid/poro interface.

    Interface nodes are ordered by arclength ``s`` along ``tau``; segment k
    joins nodes k and k+1. ``f_edge_map[k] = (triangle, local_edge)`` in the
    fluid mesh, likewise ``p_edge_map`` for the poro mesh, and
    ``f_vertices``/``p_vertices`` give the mesh vertex of each interface node.
    """

    nodes: np.ndarray
    s: np.ndarray
    n_f: np.ndarray
    n_p: np.ndarray
    tau: np.ndarray
    f_edge_map: np.ndarray
    p_edge_map: np.ndarray
    f_vertices: np.ndarray
    p_vertices: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.s) - 1

    @property
    def segments(self) -> np.ndarray:
        k = np.arange(self.n_segments)
        return np.column_stack([k, k + 1])

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.s)

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])


def _edge_owner(mesh: SubdomainMesh) -> dict:
    owner = {}
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
            owner.setdefault((min(a, b), max(a, b)), []).append((t, k))
    return owner


def _trace_on_line(mesh, p0, tau, axis):
    edges = mesh.edges_with_tag(INTERFACE)
    if not edges:
        raise NonMatching(f"{mesh.subdomain_id} mesh has no Interface edges")
    coord_fixed = p0[1 - axis]
    out = []
    for a, b in edges:
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        if pa[1 - axis] != coord_fixed or pb[1 - axis] != coord_fixed:
            raise NotOnLine(f"edge ({a}, {b}) of {mesh.subdomain_id} mesh is off the interface line")
        sa, sb = float((pa - p0) @ tau), float((pb - p0) @ tau)
        if sa > sb:
            a, b, sa, sb = b, a, sb, sa
        out.append((sa, sb, a, b))
    out.sort()
    return out


def extract_interface(mesh_f: SubdomainMesh, mesh_p: SubdomainMesh, gamma_line) -> InterfaceMesh:
    """Build the interface mesh shared by ``mesh_f`` and ``mesh_p``.

    ``gamma_line`` is ``((x0, y0), (x1, y1))``, horizontal or vertical; its
    direction fixes the tangent ``tau``.
    """
    p0 = np.asarray(gamma_line[0], dtype=float)
    p1 = np.asarray(gamma_line[1], dtype=float)
    d = p1 - p0
    if (d[0] != 0.0) == (d[1] != 0.0):
        raise NotOnLine(f"interface line {gamma_line} is not axis-aligned and non-degenerate")
    axis = 0 if d[0] != 0.0 else 1
    tau = np.zeros(2)
    tau[axis] = np.sign(d[axis])
    length = abs(d[axis])

    tf = _trace_on_line(mesh_f, p0, tau, axis)
    tp = _trace_on_line(mesh_p, p0, tau, axis)
    if len(tf) != len(tp):
        raise NonMatching(f"interface traces have {len(tf)} and {len(tp)} segments")
    for (fa, fb, fva, fvb), (pa, pb, pva, pvb) in zip(tf, tp):
        if not (np.array_equal(mesh_f.vertices[fva], mesh_p.vertices[pva])
                and np.array_equal(mesh_f.vertices[fvb], mesh_p.vertices[pvb])):
            raise NonMatching("interface vertices differ between the fluid and poro meshes")
    s = np.array([tf[0][0]] + [seg[1] for seg in tf])
    if np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] > length:
        raise NonMatching("interface trace is not a contiguous partition of the line")
    for k in range(len(tf) - 1):
        if tf[k][3] != tf[k + 1][2]:
            raise NonMatching("interface trace is not contiguous")

    f_vertices = np.array([tf[0][2]] + [seg[3] for seg in tf], dtype=np.int64)
    p_vertices = np.array([tp[0][2]] + [seg[3] for seg in tp], dtype=np.int64)
    nodes = mesh_f.vertices[f_vertices].copy()

    own_f, own_p = _edge_owner(mesh_f), _edge_owner(mesh_p)
    f_map, p_map = [], []
    for k in range(len(tf)):
        ef = tuple(sorted((int(f_vertices[k]), int(f_vertices[k + 1]))))
        ep = tuple(sorted((int(p_vertices[k]), int(p_vertices[k + 1]))))
        if len(own_f.get(ef, ())) != 1 or len(own_p.get(ep, ())) != 1:
            raise NonMatching(f"interface segment {k} is not a boundary edge of both meshes")
        f_map.append(own_f[ef][0])
        p_map.append(own_p[ep][0])
    f_map = np.array(f_map, dtype=np.int64)
    p_map = np.array(p_map, dtype=np.int64)

    normal = np.array([tau[1], -tau[0]])
    mid = 0.5 * (nodes[0] + nodes[1])
    cf = mesh_f.vertices[mesh_f.triangles[f_map[0, 0]]].mean(axis=0)
    cp = mesh_p.vertices[mesh_p.triangles[p_map[0, 0]]].mean(axis=0)
    if (cf - mid) @ normal > 0:
        normal = -normal
    if (cp - mid) @ normal < 0:
        raise OrientationError("fluid and poro meshes lie on the same side of the interface")
    n_f = normal + 0.0
    n_p = -normal + 0.0
    for a in (n_f, n_p, tau):
        a.setflags(write=False)
    return InterfaceMesh(nodes, s, n_f, n_p, tau, f_map, p_map, f_vertices, p_vertices)


def two_squares(n: int, nx_p: int | None = None, *, fluid_dirichlet=("left", "right"),
                disp_dirichlet=("top",), pres_dirichlet=("top",),
                fluid_rect=(0.0, 0.0, 1.0, 1.0), poro_rect=(0.0, 1.0, 1.0, 2.0)):
    """Standard geometry: fluid square below a poro square, interface at y = 1.

    Sides not listed as Dirichlet (and not on the interface) are Neumann.
    Returns ``(mesh_f, mesh_p, iface)``.
    """
    return stacked_rects(fluid_rect, poro_rect, n, n, nx_p or n, nx_p or n,
                         fluid_dirichlet=fluid_dirichlet, disp_dirichlet=disp_dirichlet,
                         pres_dirichlet=pres_dirichlet)


def _shared_side(rf, rp):
    fx0, fy0, fx1, fy1 = rf
    px0, py0, px1, py1 = rp
    if fy1 == py0 and fx0 == px0 and fx1 == px1:
        return "top", "bottom", ((fx0, fy1), (fx1, fy1))
    if fy0 == py1 and fx0 == px0 and fx1 == px1:
        return "bottom", "top", ((fx0, fy0), (fx1, fy0))
    if fx1 == px0 and fy0 == py0 and fy1 == py1:
        return "right", "left", ((fx1, fy0), (fx1, fy1))
    if fx0 == px1 and fy0 == py0 and fy1 == py1:
        return "left", "right", ((fx0, fy0), (fx0, fy1))
    raise NonMatching(f"rectangles {rf} and {rp} do not share a full side")


def stacked_rects(fluid_rect, poro_rect, nx_f, ny_f, nx_p, ny_p, *,
                  fluid_dirichlet=("left", "right"), disp_dirichlet=("top",),
                  pres_dirichlet=("top",)):
    side_f, side_p, line = _shared_side(tuple(map(float, fluid_rect)), tuple(map(float, poro_rect)))
    tf, tp = {}, {}
    for side in SIDES:
        if side == side_f:
            tf[side] = INTERFACE
        else:
            tf[side] = DIRICHLET_F if side in fluid_dirichlet else NEUMANN_F
        if side == side_p:
            tp[side] = INTERFACE
        else:
            tp[side] = (DIRICHLET_S if side in disp_dirichlet else NEUMANN_S,
                        DIRICHLET_P if side in pres_dirichlet else NEUMANN_P)
    mesh_f = build_rect_mesh(fluid_rect, nx_f, ny_f, FLUID, tf)
    mesh_p = build_rect_mesh(poro_rect, nx_p, ny_p, PORO, tp)
    return mesh_f, mesh_p, extract_interface(mesh_f, mesh_p, line)
