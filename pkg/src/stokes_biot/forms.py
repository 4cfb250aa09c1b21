"""Sparse assembly of the bilinear forms and load functionals.

Every matrix is stored with rows indexed by the test space and columns by the
trial space. Volume matrices on U x X are block diagonal with U first.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_legendre

from . import _kernels
from .elements import (SEGMENT, TRIANGLE, FunctionSpace, Spaces, physical_gradients,
                       quadrature_rule, tabulate, triangle_geometry, map_points)
from .errors import MissingHistory, NonPositiveParam, OrientationError, SpaceMismatch
from .mesh import (FLUID, PORO, NEUMANN_F, NEUMANN_P, NEUMANN_S, InterfaceMesh,
                   SubdomainMesh)

BILINEAR_ORDER = 4
LOAD_ORDER = 6
FAR_GAUSS = 12
NEAR_GAUSS = 16


@dataclass(frozen=True)
class PhysicalParams:
    rho_f: float = 1.0
    nu_f: float = 1.0
    rho_p: float = 1.0
    nu_p: float = 1.0
    lambda_lame: float = 1.0
    alpha: float = 1.0
    s0: float = 1.0
    kappa: float = 1.0
    beta_bjs: float = 1.0
    eps_bar: float = 1e-4
    eps_bar_zero_override: bool = False

    def __post_init__(self):
        for f in fields(self):
            if f.name == "eps_bar_zero_override":
                continue
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise NonPositiveParam(f"{f.name} must be finite, got {v}")
            if f.name == "eps_bar" and v == 0.0 and self.eps_bar_zero_override:
                continue
            if v <= 0:
                raise NonPositiveParam(f"{f.name} must be > 0, got {v}")


# ---------------------------------------------------------------------------
# volume kernels

def _scatter(local, rows, cols, shape):
    R = np.broadcast_to(rows[:, :, None], local.shape)
    C = np.broadcast_to(cols[:, None, :], local.shape)
    return sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape).tocsr()


def _volume_setup(space: FunctionSpace, order=BILINEAR_ORDER):
    if not isinstance(space.mesh, SubdomainMesh):
        raise SpaceMismatch("volume form on a non-volume space")
    q = quadrature_rule(TRIANGLE, order)
    geom = triangle_geometry(space.mesh)
    v, g = tabulate(TRIANGLE, space.degree, q.points)
    G = physical_gradients(geom, g)            # (T, nq, nb, 2)
    W = geom.det[:, None] * q.weights[None]     # (T, nq)
    return q, geom, v, G, W


def _expand_vector(local_scalar, c=2):
    """delta_cd * L_ab laid out in interleaved order."""
    T, nb, _ = local_scalar.shape
    out = np.zeros((T, nb, c, nb, c))
    for k in range(c):
        out[:, :, k, :, k] = local_scalar
    return out.reshape(T, nb * c, nb * c)


@lru_cache(maxsize=512)
def mass_matrix(space: FunctionSpace, coef=1.0):
    """(u, v) on a triangle or interface space."""
    if isinstance(space.mesh, InterfaceMesh):
        return interface_mass(space, space, coef)
    _, _, v, _, W = _volume_setup(space)
    loc = coef * np.einsum("tq,qa,qb->tab", W, v, v)
    if space.components > 1:
        loc = _expand_vector(loc, space.components)
    return _scatter(loc, space.dofmap, space.dofmap, (space.ndofs, space.ndofs))


@lru_cache(maxsize=512)
def stiffness_matrix(space: FunctionSpace, coef=1.0):
    """(grad u, grad v); componentwise for vector spaces."""
    _, _, _, G, W = _volume_setup(space)
    loc = coef * np.einsum("tq,tqad,tqbd->tab", W, G, G)
    if space.components > 1:
        loc = _expand_vector(loc, space.components)
    return _scatter(loc, space.dofmap, space.dofmap, (space.ndofs, space.ndofs))


@lru_cache(maxsize=512)
def strain_matrix(space: FunctionSpace, coef=1.0):
    """(D(u), D(v)) for a vector space, D the symmetric gradient."""
    if space.components != 2:
        raise SpaceMismatch("strain form needs a 2-vector space")
    _, _, _, G, W = _volume_setup(space)
    T, _, nb, _ = G.shape
    gg = np.einsum("tq,tqad,tqbd->tab", W, G, G)
    cross = np.einsum("tq,tqad,tqbc->tacbd", W, G, G)  # W * d_d phi_a * d_c phi_b
    loc = 0.5 * cross
    for c in range(2):
        loc[:, :, c, :, c] += 0.5 * gg
    loc = coef * loc.reshape(T, 2 * nb, 2 * nb)
    return _scatter(loc, space.dofmap, space.dofmap, (space.ndofs, space.ndofs))


@lru_cache(maxsize=512)
def div_div_matrix(space: FunctionSpace, coef=1.0):
    """(div u, div v) for a vector space."""
    if space.components != 2:
        raise SpaceMismatch("divergence form needs a 2-vector space")
    _, _, _, G, W = _volume_setup(space)
    T, _, nb, _ = G.shape
    loc = coef * np.einsum("tq,tqac,tqbd->tacbd", W, G, G).reshape(T, 2 * nb, 2 * nb)
    return _scatter(loc, space.dofmap, space.dofmap, (space.ndofs, space.ndofs))


@lru_cache(maxsize=512)
def div_pairing(vspace: FunctionSpace, qspace: FunctionSpace, coef=1.0):
    """Rows q, columns v: (div v_j, q_i)."""
    if vspace.mesh is not qspace.mesh or vspace.components != 2 or qspace.components != 1:
        raise SpaceMismatch("div pairing needs a vector and a scalar space on one mesh")
    q, geom, _, G, W = _volume_setup(vspace)
    psi, _ = tabulate(TRIANGLE, qspace.degree, q.points)
    T, _, nb, _ = G.shape
    loc = coef * np.einsum("tq,qi,tqbd->tibd", W, psi, G).reshape(T, psi.shape[1], 2 * nb)
    return _scatter(loc, qspace.dofmap, vspace.dofmap, (qspace.ndofs, vspace.ndofs))


def _check_subdomain(space, sid, name):
    if not isinstance(space.mesh, SubdomainMesh) or space.mesh.subdomain_id != sid:
        raise SpaceMismatch(f"{name} must live on the {sid} mesh")


def assemble_volume_form(form_id: str, spaces: Spaces, params: PhysicalParams, dt: float):
    """A1 on U x X, A2 on Q_p, BPP (Q_p x X), BPF (Q_f x U), in scaled variables."""
    if dt <= 0:
        raise NonPositiveParam(f"dt must be > 0, got {dt}")
    p = params
    if form_id == "A1":
        _check_subdomain(spaces.U, FLUID, "U")
        _check_subdomain(spaces.X, PORO, "X")
        AU = mass_matrix(spaces.U, p.rho_f) + strain_matrix(spaces.U, 2 * p.nu_f * dt)
        AX = (mass_matrix(spaces.X, p.rho_p) + strain_matrix(spaces.X, 2 * p.nu_p * dt**2)
              + div_div_matrix(spaces.X, dt**2 * p.lambda_lame))
        return sp.block_diag([AU, AX], format="csr")
    if form_id == "A2":
        _check_subdomain(spaces.Qp, PORO, "Q_p")
        return (mass_matrix(spaces.Qp, p.s0 / dt**2)
                + stiffness_matrix(spaces.Qp, p.kappa / dt)).tocsr()
    if form_id == "BPP":
        _check_subdomain(spaces.X, PORO, "X")
        return div_pairing(spaces.X, spaces.Qp, -p.alpha)
    if form_id == "BPF":
        _check_subdomain(spaces.U, FLUID, "U")
        return div_pairing(spaces.U, spaces.Qf, -1.0)
    raise ValueError(f"unknown volume form {form_id!r}")


# ---------------------------------------------------------------------------
# facets: boundary edges and interface segments

@dataclass(frozen=True)
class Facets:
    """Straight edges p0 -> p1 of a triangle mesh with quadrature data.

    ``points`` are physical quadrature points, ``weights`` physical weights,
    ``normal`` the outward unit normal of the owning cell.
    """

    cells: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normal: np.ndarray
    t: np.ndarray
    p0: np.ndarray
    p1: np.ndarray


def _line_rule(order):
    q = quadrature_rule(SEGMENT, order)
    return q.points[:, 0], q.weights


def _facet_basis(space: FunctionSpace, cells, p0, p1, t):
    geom = triangle_geometry(space.mesh)
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    J = geom.J[cells]
    rhs = pts - geom.origin[cells][:, None, :]
    ref = np.linalg.solve(J[:, None], rhs[..., None])[..., 0]
    vals, _ = tabulate(TRIANGLE, space.degree, ref.reshape(-1, 2))
    return pts, vals.reshape(len(cells), len(t), -1)


def _facet_geometry(mesh: SubdomainMesh, cells, p0, p1, t, w):
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    centroid = mesh.vertices[mesh.triangles[cells]].mean(axis=1)
    flip = np.einsum("fi,fi->f", centroid - p0, n) > 0
    n[flip] *= -1
    pts = p0[:, None, :] + t[None, :, None] * d[:, None, :]
    return Facets(cells, pts, length[:, None] * w[None], n, t, p0, p1)


@lru_cache(maxsize=256)
def boundary_facets(mesh: SubdomainMesh, tag: str, order=LOAD_ORDER) -> Facets:
    own = {}
    for c, tri in enumerate(mesh.triangles):
        for k in range(3):
            a, b = int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
            own[(min(a, b), max(a, b))] = c
    edges = sorted(mesh.edges_with_tag(tag))
    t, w = _line_rule(order)
    if not edges:
        empty = np.zeros((0, 2))
        return Facets(np.zeros(0, int), np.zeros((0, len(t), 2)), np.zeros((0, len(t))),
                      empty, t, empty, empty)
    cells = np.array([own[e] for e in edges])
    e = np.array(edges)
    return _facet_geometry(mesh, cells, mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]], t, w)


def interface_facets(space: FunctionSpace, iface: InterfaceMesh, order=LOAD_ORDER) -> Facets:
    mesh = space.mesh
    emap = iface.f_edge_map if mesh.subdomain_id == FLUID else iface.p_edge_map
    t, w = _line_rule(order)
    return _facet_geometry(mesh, emap[:, 0], iface.nodes[:-1], iface.nodes[1:], t, w)


def _iface_basis(space: FunctionSpace, t):
    v, _ = tabulate(SEGMENT, space.degree, t[:, None])
    return v


@lru_cache(maxsize=512)
def interface_mass(a: FunctionSpace, b: FunctionSpace, coef=1.0):
    """Rows a, columns b: (psi_j, chi_i) on the interface."""
    iface = a.mesh
    if not (isinstance(iface, InterfaceMesh) and b.mesh is iface):
        raise SpaceMismatch("interface mass needs two spaces on one interface mesh")
    t, w = _line_rule(BILINEAR_ORDER)
    va, vb = _iface_basis(a, t), _iface_basis(b, t)
    loc = coef * np.einsum("k,q,qi,qj->kij", iface.h, w, va, vb)
    return _scatter(loc, a.cell_nodes, b.cell_nodes, (a.ndofs, b.ndofs))


def interface_trace_pairing(lm: FunctionSpace, vol: FunctionSpace, direction=None, coef=1.0):
    """Rows lm, columns vol: coef * (vol_j . direction, s_i) on the interface.

    ``direction`` is a constant unit vector for vector ``vol`` spaces.
    """
    d = None if direction is None else tuple(float(c) for c in direction)
    return _trace_pairing(lm, vol, d, coef)


@lru_cache(maxsize=512)
def _trace_pairing(lm, vol, direction, coef):
    iface = lm.mesh
    if not isinstance(iface, InterfaceMesh) or not isinstance(vol.mesh, SubdomainMesh):
        raise SpaceMismatch("trace pairing needs an interface and a volume space")
    t, w = _line_rule(BILINEAR_ORDER)
    emap = iface.f_edge_map if vol.mesh.subdomain_id == FLUID else iface.p_edge_map
    cells = emap[:, 0]
    _, phi = _facet_basis(vol, cells, iface.nodes[:-1], iface.nodes[1:], t)  # (K, q, nb)
    s = _iface_basis(lm, t)
    loc = coef * np.einsum("k,q,qi,kqb->kib", iface.h, w, s, phi)
    cols_nodes = vol.cell_nodes[cells]
    if vol.components == 1:
        return _scatter(loc, lm.cell_nodes, cols_nodes, (lm.ndofs, vol.ndofs))
    d = np.asarray(direction, dtype=float)
    K, ni, nb = loc.shape
    locv = (loc[:, :, :, None] * d).reshape(K, ni, 2 * nb)
    cols = (2 * cols_nodes[:, :, None] + np.arange(2)).reshape(K, -1)
    return _scatter(locv, lm.cell_nodes, cols, (lm.ndofs, vol.ndofs))


def _check_orientation(iface: InterfaceMesh):
    if not (np.dot(iface.n_f, iface.n_p) == -1.0 and np.dot(iface.tau, iface.n_f) == 0.0
            and np.dot(iface.tau, iface.tau) == 1.0):
        raise OrientationError("interface normals/tangent are inconsistent")


def assemble_interface_form(form_id: str, spaces: Spaces, params: PhysicalParams, dt: float):
    """AG (G2 x G2), BG1 and BG2 (G x [U, X]), BLM (G1 x L), B2 (L x Q_p)."""
    iface = spaces.iface
    _check_orientation(iface)
    if form_id == "AG":
        return interface_mass(spaces.G2, spaces.G2, 1.0 / (params.beta_bjs * dt))
    if form_id == "BG1":
        BU = interface_trace_pairing(spaces.G1, spaces.U, iface.n_f, -1.0)
        BX = interface_trace_pairing(spaces.G1, spaces.X, iface.n_p, -1.0)
        return sp.hstack([BU, BX], format="csr")
    if form_id == "BG2":
        BU = interface_trace_pairing(spaces.G2, spaces.U, iface.tau, -1.0)
        BX = interface_trace_pairing(spaces.G2, spaces.X, iface.tau, 1.0)
        return sp.hstack([BU, BX], format="csr")
    if form_id == "BLM":
        return interface_mass(spaces.G1, spaces.L)
    if form_id == "B2":
        return interface_trace_pairing(spaces.L, spaces.Qp)
    raise ValueError(f"unknown interface form {form_id!r}")


# ---------------------------------------------------------------------------
# fractional Gram

def _gauss01(n):
    x, w = roots_legendre(n)
    return (x + 1) / 2, w / 2


def slobodeckij_matrix(s) -> np.ndarray:
    """Seminorm part of the Gram for continuous P1 on nodes ``s`` (dense)."""
    xg, wg = _gauss01(FAR_GAUSS)
    vg, vw = _gauss01(NEAR_GAUSS)
    return _kernels.slobodeckij_gram(np.ascontiguousarray(s, dtype=float), xg, wg, vg, vw)


def assemble_h_half_gram(lambda_space: FunctionSpace):
    """L2 mass plus Slobodeckij seminorm Gram on continuous P1 interface functions."""
    if not isinstance(lambda_space.mesh, InterfaceMesh) or lambda_space.degree != 1:
        raise SpaceMismatch("H^1/2 Gram needs continuous P1 on the interface")
    S = slobodeckij_matrix(lambda_space.mesh.s)
    return sp.csr_matrix(mass_matrix(lambda_space).toarray() + S)


def slobodeckij_seminorm_sq(s, u) -> float:
    """Double integral of (u(x)-u(y))^2/|x-y|^2 for the P1 function with nodal values u.

    Differences are formed from nodal values directly, so constants give 0 exactly.
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    h = np.diff(s)
    du = np.diff(u)
    total = float(np.sum(du * du))
    vg, vw = _gauss01(NEAR_GAUSS)
    for i in range(len(h) - 1):
        h1, h2 = h[i], h[i + 1]
        a, b = u[i] - u[i + 1], u[i + 2] - u[i + 1]
        r1 = (a - b * vg) / (h1 + h2 * vg)
        r2 = (a * vg - b) / (h1 * vg + h2)
        total += h1 * h2 * float(vw @ (r1 * r1 + r2 * r2))
    xg, wg = _gauss01(FAR_GAUSS)
    W = np.outer(wg, wg)
    for i in range(len(h)):
        ux = u[i] + (u[i + 1] - u[i]) * xg
        x = s[i] + h[i] * xg
        for j in range(i + 2, len(h)):
            uy = u[j] + (u[j + 1] - u[j]) * xg
            y = s[j] + h[j] * xg
            q = (ux[:, None] - uy[None, :]) / (x[:, None] - y[None, :])
            total += 2.0 * h[i] * h[j] * float(np.sum(W * q * q))
    return total


# ---------------------------------------------------------------------------
# loads

Fn = Optional[Callable]


@dataclass
class LoadData:
    """Data at the new time level; ``None`` means zero.

    Volume data are callables ``f(x, y)``; Neumann data ``g(x, y, nx, ny)``
    with the outward normal. Interface defects ``rho1/rho2/rho3/d_s`` and the
    exact multiplier ``lam_star`` take ``(x, y)`` on the interface.
    """

    f_f: Fn = None
    f_eta: Fn = None
    f_p: Fn = None
    u_N: Fn = None
    eta_N: Fn = None
    p_N: Fn = None
    rho1: Fn = None
    rho2: Fn = None
    rho3: Fn = None
    d_s: Fn = None
    lam_star: Fn = None


@dataclass
class History:
    """Scaled history needed by the loads: u^n, eta_hat^n, eta_hat^{n-1}, pp_hat^n."""

    u: Optional[np.ndarray] = None
    eta_hat: Optional[np.ndarray] = None
    eta_hat_prev: Optional[np.ndarray] = None
    pp_hat: Optional[np.ndarray] = None


def _vec_eval(f, x, y, comps):
    vals = np.asarray(f(x, y), dtype=float)
    if comps == 1:
        return np.broadcast_to(vals, x.shape)
    return np.stack([np.broadcast_to(vals[c], x.shape) for c in range(comps)], axis=-1)


def volume_load(space: FunctionSpace, f, order=LOAD_ORDER) -> np.ndarray:
    """(f, v) with f evaluated at quadrature points."""
    out = np.zeros(space.ndofs)
    if f is None:
        return out
    q, geom, v, _, W = _volume_setup(space, order)
    pts = map_points(geom, q.points)
    fv = _vec_eval(f, pts[..., 0], pts[..., 1], space.components)
    if space.components == 1:
        loc = np.einsum("tq,qa,tq->ta", W, v, fv)
    else:
        loc = np.einsum("tq,qa,tqc->tac", W, v, fv).reshape(len(W), -1)
    np.add.at(out, space.dofmap, loc)
    return out


def _facet_load(space: FunctionSpace, fac: Facets, f, with_normal: bool) -> np.ndarray:
    out = np.zeros(space.ndofs)
    if f is None or len(fac.cells) == 0:
        return out
    _, phi = _facet_basis(space, fac.cells, fac.p0, fac.p1, fac.t)
    x, y = fac.points[..., 0], fac.points[..., 1]
    if with_normal:
        nx = np.broadcast_to(fac.normal[:, 0:1], x.shape)
        ny = np.broadcast_to(fac.normal[:, 1:2], x.shape)
        vals = np.asarray(f(x, y, nx, ny), dtype=float)
    else:
        vals = np.asarray(f(x, y), dtype=float)
    c = space.components
    nodes = space.cell_nodes[fac.cells]
    if c == 1:
        loc = np.einsum("fq,fqb,fq->fb", fac.weights, phi, np.broadcast_to(vals, x.shape))
        np.add.at(out, nodes, loc)
    else:
        vv = np.stack([np.broadcast_to(vals[k], x.shape) for k in range(c)], axis=-1)
        loc = np.einsum("fq,fqb,fqc->fbc", fac.weights, phi, vv)
        np.add.at(out, c * nodes[:, :, None] + np.arange(c), loc)
    return out


def neumann_load(space: FunctionSpace, tag: str, g) -> np.ndarray:
    """<g(x, y, n), v> over edges tagged ``tag``."""
    return _facet_load(space, boundary_facets(space.mesh, tag), g, True)


def interface_volume_load(space: FunctionSpace, iface: InterfaceMesh, f) -> np.ndarray:
    """<f, v> on the interface for a volume space."""
    return _facet_load(space, interface_facets(space, iface), f, False)


def interface_load(space: FunctionSpace, f) -> np.ndarray:
    """(f, s) for an interface space, f(x, y) scalar."""
    out = np.zeros(space.ndofs)
    if f is None:
        return out
    iface = space.mesh
    t, w = _line_rule(LOAD_ORDER)
    pts = iface.nodes[:-1, None, :] + t[None, :, None] * (iface.nodes[1:] - iface.nodes[:-1])[:, None, :]
    vals = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:2])
    loc = np.einsum("k,q,qi,kq->ki", iface.h, w, _iface_basis(space, t), vals)
    np.add.at(out, space.cell_nodes, loc)
    return out


def _require(history, *names):
    if history is None:
        raise MissingHistory("history is required")
    for n in names:
        if getattr(history, n) is None:
            raise MissingHistory(f"history field {n!r} is missing")


def assemble_load(load_id: str, spaces: Spaces, data: LoadData, history: History,
                  params: PhysicalParams, dt: float) -> np.ndarray:
    """Right-hand sides F1 (U x X), F2 (Q_p), F3 (G1), F4 (G2) in scaled variables.

    Defect data in ``data`` add the generalized interface loads; all ``None``
    recovers the homogeneous interface conditions.
    """
    data = data or LoadData()
    p = params
    iface = spaces.iface
    if load_id == "F1":
        _require(history, "u", "eta_hat", "eta_hat_prev")
        MU = mass_matrix(spaces.U, p.rho_f)
        MX = mass_matrix(spaces.X, p.rho_p)
        fu = (dt * volume_load(spaces.U, data.f_f)
              + dt * neumann_load(spaces.U, NEUMANN_F, data.u_N)
              + MU @ history.u)
        fx = (dt * volume_load(spaces.X, data.f_eta)
              + dt * neumann_load(spaces.X, NEUMANN_S, data.eta_N)
              + MX @ (2 * history.eta_hat - history.eta_hat_prev)
              + dt * interface_volume_load(spaces.X, iface, data.d_s))
        return np.concatenate([fu, fx])
    if load_id == "F2":
        _require(history, "eta_hat", "pp_hat")
        return (volume_load(spaces.Qp, data.f_p)
                + neumann_load(spaces.Qp, NEUMANN_P, data.p_N)
                + mass_matrix(spaces.Qp, p.s0 / dt**2) @ history.pp_hat
                - div_pairing(spaces.X, spaces.Qp, -p.alpha) @ history.eta_hat)
    if load_id == "F3":
        _require(history, "eta_hat")
        BX = interface_trace_pairing(spaces.G1, spaces.X, iface.n_p)
        return BX @ history.eta_hat + interface_load(spaces.G1, data.rho1)
    if load_id == "F4":
        _require(history, "eta_hat")
        BX = interface_trace_pairing(spaces.G2, spaces.X, iface.tau)
        rho3 = None if data.rho3 is None else (lambda x, y: data.rho3(x, y) / p.beta_bjs)
        return -(BX @ history.eta_hat) + interface_load(spaces.G2, rho3)
    raise ValueError(f"unknown load {load_id!r}")


def lambda_row_load(spaces: Spaces, data: LoadData, params: PhysicalParams, dt: float,
                    S=None) -> np.ndarray:
    """Right-hand side of the stabilized pressure-matching equation (defects only)."""
    out = dt * interface_load(spaces.L, data.rho2) if data is not None else np.zeros(spaces.L.ndofs)
    if data is not None and data.lam_star is not None:
        S = assemble_h_half_gram(spaces.L) if S is None else S
        out = out + params.eps_bar * (S @ spaces.L.interpolate(data.lam_star))
    return out
