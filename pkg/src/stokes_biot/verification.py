"""Manufactured solutions, convergence studies and an independent dense solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log
from typing import Callable

import numpy as np

from . import _kernels, solver
from .elements import TRIANGLE, evaluate, quadrature_rule, tabulate, triangle_geometry, map_points
from .errors import Singular, UnknownCase
from .forms import LoadData, PhysicalParams
from .system import full_matrix
from .timestepper import InitialData, RunConfig, build_problem, init_state, step

PI = np.pi
ORACLE_MAX_DOFS = 1500


@dataclass(frozen=True)
class Fields:
    """Spatial profiles and their derivatives; each entry maps (x, y) to an array.

    Vector fields return ``[c0, c1]``; gradients ``[[d0 c0, d1 c0], [d0 c1, d1 c1]]``.
    """

    U: Callable
    dU: Callable
    lapU: Callable
    Pf: Callable
    dPf: Callable
    H: Callable
    dH: Callable
    lapH: Callable
    graddivH: Callable
    P: Callable
    dP: Callable
    lapP: Callable


def _zero(x, y):
    return np.zeros_like(np.asarray(x, dtype=float) + np.asarray(y, dtype=float))


def _zero_vec(x, y):
    z = _zero(x, y)
    return np.array([z, z])


def _zero_mat(x, y):
    z = _zero(x, y)
    return np.array([[z, z], [z, z]])


def _trig_fields(nu_f: float) -> Fields:
    def U(x, y):
        a, b = PI * x, PI * y
        return np.array([PI * np.sin(a)**2 * np.cos(b), -PI * np.sin(2 * a) * np.sin(b)])

    def dU(x, y):
        a, b = PI * x, PI * y
        return np.array([
            [PI**2 * np.sin(2 * a) * np.cos(b), -PI**2 * np.sin(a)**2 * np.sin(b)],
            [-2 * PI**2 * np.cos(2 * a) * np.sin(b), -PI**2 * np.sin(2 * a) * np.cos(b)],
        ])

    def lapU(x, y):
        a, b = PI * x, PI * y
        return np.array([PI**3 * (2 * np.cos(2 * a) - np.sin(a)**2) * np.cos(b),
                         5 * PI**3 * np.sin(2 * a) * np.sin(b)])

    def Pf(x, y):
        a, b = PI * x, PI * y
        return -2 * nu_f * PI**2 * np.sin(2 * a) * np.cos(b) + y * np.cos(a)

    def dPf(x, y):
        a, b = PI * x, PI * y
        return np.array([-4 * nu_f * PI**3 * np.cos(2 * a) * np.cos(b) - PI * y * np.sin(a),
                         2 * nu_f * PI**3 * np.sin(2 * a) * np.sin(b) + np.cos(a)])

    def H(x, y):
        a, c = PI * x, PI * y / 2
        return np.array([np.cos(a) * np.sin(c), np.sin(a) * np.sin(c)])

    def dH(x, y):
        a, c = PI * x, PI * y / 2
        return np.array([[-PI * np.sin(a) * np.sin(c), PI / 2 * np.cos(a) * np.cos(c)],
                         [PI * np.cos(a) * np.sin(c), PI / 2 * np.sin(a) * np.cos(c)]])

    def lapH(x, y):
        return -1.25 * PI**2 * H(x, y)

    def graddivH(x, y):
        a, c = PI * x, PI * y / 2
        return np.array([PI**2 * np.cos(a) * (0.5 * np.cos(c) - np.sin(c)),
                         -PI**2 * np.sin(a) * (0.5 * np.cos(c) + 0.25 * np.sin(c))])

    def P(x, y):
        return np.cos(PI * x) * np.sin(PI * y / 2)

    def dP(x, y):
        a, c = PI * x, PI * y / 2
        return np.array([-PI * np.sin(a) * np.sin(c), PI / 2 * np.cos(a) * np.cos(c)])

    def lapP(x, y):
        return -1.25 * PI**2 * P(x, y)

    return Fields(U, dU, lapU, Pf, dPf, H, dH, lapH, graddivH, P, dP, lapP)


def _poly_fields() -> Fields:
    def U(x, y):
        return np.array([y**2 + 0 * x, _zero(x, y)])

    def dU(x, y):
        z = _zero(x, y)
        return np.array([[z, 2 * y + z], [z, z]])

    def lapU(x, y):
        z = _zero(x, y)
        return np.array([2 + z, z])

    return Fields(U, dU, lapU, _zero, _zero_vec, _zero_vec, _zero_mat, _zero_vec, _zero_vec,
                  _zero, _zero_vec, _zero)


def _sym(G):
    return 0.5 * (G + np.swapaxes(G, 0, 1))


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields ``g(t) * profile(x, y)`` and the data they induce.

    ``bc`` holds the Dirichlet side lists used by the run configuration.
    """

    name: str
    params: PhysicalParams
    fields: Fields
    g: Callable
    dg: Callable
    ddg: Callable
    bc: dict = field(default_factory=dict)
    tau: tuple = (1.0, 0.0)
    n_f: tuple = (0.0, 1.0)

    # exact fields
    def u(self, x, y, t):
        return self.g(t) * self.fields.U(x, y)

    def grad_u(self, x, y, t):
        return self.g(t) * self.fields.dU(x, y)

    def pf(self, x, y, t):
        return self.g(t) * self.fields.Pf(x, y)

    def eta(self, x, y, t):
        return self.g(t) * self.fields.H(x, y)

    def grad_eta(self, x, y, t):
        return self.g(t) * self.fields.dH(x, y)

    def eta_t(self, x, y, t):
        return self.dg(t) * self.fields.H(x, y)

    def pp(self, x, y, t):
        return self.g(t) * self.fields.P(x, y)

    def grad_pp(self, x, y, t):
        return self.g(t) * self.fields.dP(x, y)

    def sigma_f(self, x, y, t):
        F = self.fields
        G = 2 * self.params.nu_f * _sym(F.dU(x, y))
        P = F.Pf(x, y)
        G[0, 0] -= P
        G[1, 1] -= P
        return self.g(t) * G

    def sigma_p(self, x, y, t):
        F, p = self.fields, self.params
        dH = F.dH(x, y)
        S = 2 * p.nu_p * _sym(dH)
        iso = p.lambda_lame * (dH[0, 0] + dH[1, 1]) - p.alpha * F.P(x, y)
        S[0, 0] += iso
        S[1, 1] += iso
        return self.g(t) * S

    # forcings
    def f_f(self, x, y, t):
        F, p = self.fields, self.params
        return (p.rho_f * self.dg(t) * F.U(x, y)
                + self.g(t) * (-p.nu_f * F.lapU(x, y) + F.dPf(x, y)))

    def f_eta(self, x, y, t):
        F, p = self.fields, self.params
        return (p.rho_p * self.ddg(t) * F.H(x, y)
                + self.g(t) * (-p.nu_p * F.lapH(x, y)
                               - (p.nu_p + p.lambda_lame) * F.graddivH(x, y)
                               + p.alpha * F.dP(x, y)))

    def f_p(self, x, y, t):
        F, p = self.fields, self.params
        dH = F.dH(x, y)
        return (p.s0 * self.dg(t) * F.P(x, y) + p.alpha * self.dg(t) * (dH[0, 0] + dH[1, 1])
                - p.kappa * self.g(t) * F.lapP(x, y))

    def f_mass(self, x, y, t):
        """div u, zero for every registered case."""
        dU = self.fields.dU(x, y)
        return self.g(t) * (dU[0, 0] + dU[1, 1])

    # interface quantities
    def g1(self, x, y, t):
        n = np.array(self.n_f)
        return np.einsum("i,ij...,j->...", n, self.sigma_f(x, y, t), n)

    def g2(self, x, y, t):
        return np.einsum("i,ij...,j->...", np.array(self.tau), self.sigma_f(x, y, t),
                         np.array(self.n_f))

    def lam(self, x, y, t):
        n_p = -np.array(self.n_f)
        return self.params.kappa * np.einsum("i...,i->...", self.grad_pp(x, y, t), n_p)

    def defects(self, t):
        tau, n_f = np.array(self.tau), np.array(self.n_f)
        n_p = -n_f
        beta = self.params.beta_bjs

        def dot(v, n):
            return np.einsum("i...,i->...", v, n)

        def rho1(x, y):
            return dot(self.u(x, y, t), n_f) + dot(self.eta_t(x, y, t), n_p) - self.lam(x, y, t)

        def rho2(x, y):
            return self.g1(x, y, t) + self.pp(x, y, t)

        def rho3(x, y):
            return (self.g2(x, y, t) + beta * dot(self.u(x, y, t), tau)
                    - beta * dot(self.eta_t(x, y, t), tau))

        def d_s(x, y):
            return (np.einsum("ij...,j->i...", self.sigma_p(x, y, t), n_p)
                    + np.einsum("ij...,j->i...", self.sigma_f(x, y, t), n_f))

        return rho1, rho2, rho3, d_s

    def load_data(self, t: float, defects: bool = False) -> LoadData:
        """Volume, Neumann and (optionally) interface defect data at time ``t``."""
        p = self.params

        def traction(sig):
            return lambda x, y, nx, ny: np.einsum("ij...,j...->i...", sig(x, y, t),
                                                  np.array([nx, ny]))

        data = LoadData(
            f_f=lambda x, y: self.f_f(x, y, t),
            f_eta=lambda x, y: self.f_eta(x, y, t),
            f_p=lambda x, y: self.f_p(x, y, t),
            u_N=traction(self.sigma_f),
            eta_N=traction(self.sigma_p),
            p_N=lambda x, y, nx, ny: p.kappa * np.einsum("i...,i...->...", self.grad_pp(x, y, t),
                                                         np.array([nx, ny])),
        )
        if defects:
            data.rho1, data.rho2, data.rho3, data.d_s = self.defects(t)
            data.lam_star = lambda x, y: self.lam(x, y, t)
        return data

    def initial_data(self) -> InitialData:
        return InitialData(
            u0=lambda x, y: self.u(x, y, 0.0),
            eta0=lambda x, y: self.eta(x, y, 0.0),
            eta_dot0=lambda x, y: self.eta_t(x, y, 0.0),
            pp0=lambda x, y: self.pp(x, y, 0.0),
        )


CASES = ("trig", "poly", "zero")
_STD_BC = {"fluid_dirichlet": ("left", "right"), "poro_disp_dirichlet": ("top",),
           "poro_pres_dirichlet": ("top",)}


def manufactured_case(id: str, params: PhysicalParams = None) -> ManufacturedCase:
    """Registered cases: ``trig`` (exp-in-time, trigonometric in space), ``poly``, ``zero``."""
    params = params or PhysicalParams()
    if id == "trig":
        return ManufacturedCase("trig", params, _trig_fields(params.nu_f),
                                lambda t: np.exp(-t), lambda t: -np.exp(-t), lambda t: np.exp(-t),
                                dict(_STD_BC))
    if id == "poly":
        one = lambda t: 1.0  # noqa: E731
        nil = lambda t: 0.0  # noqa: E731
        bc = dict(_STD_BC, fluid_dirichlet=("bottom",))
        return ManufacturedCase("poly", params, _poly_fields(), one, nil, nil, bc)
    if id == "zero":
        f = Fields(_zero_vec, _zero_mat, _zero_vec, _zero, _zero_vec, _zero_vec, _zero_mat,
                   _zero_vec, _zero_vec, _zero, _zero_vec, _zero)
        one = lambda t: 1.0  # noqa: E731
        return ManufacturedCase("zero", params, f, one, one, one, dict(_STD_BC))
    raise UnknownCase(id)


# ---------------------------------------------------------------------------
# errors and convergence

ERROR_ORDER = 6


def volume_errors(space, coeffs, exact, grad_exact=None):
    """(L2, H1-seminorm) errors of a triangle-space function against callables."""
    q = quadrature_rule(TRIANGLE, ERROR_ORDER)
    geom = triangle_geometry(space.mesh)
    pts = map_points(geom, q.points)
    W = geom.det[:, None] * q.weights[None]
    vals, grads = evaluate(space, coeffs, q.points)
    x, y = pts[..., 0], pts[..., 1]
    ex = np.asarray(exact(x, y))
    if space.components == 1:
        e0 = vals - ex
    else:
        e0 = vals - np.moveaxis(ex, 0, -1)
    l2 = float(np.sqrt(np.sum(W * (e0**2 if e0.ndim == 2 else np.sum(e0**2, axis=-1)))))
    if grad_exact is None:
        return l2, None
    gx = np.asarray(grad_exact(x, y))
    if space.components == 1:
        e1 = grads - np.moveaxis(gx, 0, -1)
        h1 = np.sum(W * np.sum(e1**2, axis=-1))
    else:
        e1 = grads - np.moveaxis(np.moveaxis(gx, 0, -1), 0, -1)
        h1 = np.sum(W * np.sum(e1**2, axis=(-1, -2)))
    return l2, float(np.sqrt(h1))


def interface_error(space, coeffs, exact) -> float:
    """L2(gamma) error of an interface-space function."""
    iface = space.mesh
    qr = quadrature_rule("segment", ERROR_ORDER)
    t, w = qr.points[:, 0], qr.weights
    v, _ = tabulate("segment", space.degree, t[:, None])
    vals = np.asarray(coeffs)[space.cell_nodes] @ v.T  # (K, q)
    pts = iface.nodes[:-1, None, :] + t[None, :, None] * (iface.nodes[1:] - iface.nodes[:-1])[:, None, :]
    ex = np.broadcast_to(exact(pts[..., 0], pts[..., 1]), vals.shape)
    return float(np.sqrt(np.sum(iface.h[:, None] * w[None] * (vals - ex)**2)))


ERROR_COLUMNS = ("err_u_L2", "err_u_H1", "err_pf_L2", "err_eta_L2", "err_eta_H1", "err_pp_L2",
                 "err_pp_H1", "err_g1", "err_g2", "err_lam")
RATE_FIELDS = ("err_u_L2", "err_u_H1", "err_pf_L2", "err_eta_L2", "err_eta_H1", "err_pp_L2",
               "err_pp_H1")


def state_errors(case: ManufacturedCase, state) -> dict:
    s, t = state.spaces, state.t
    eu = volume_errors(s.U, state.u, lambda x, y: case.u(x, y, t), lambda x, y: case.grad_u(x, y, t))
    epf = volume_errors(s.Qf, state.pf, lambda x, y: case.pf(x, y, t))
    ee = volume_errors(s.X, state.eta, lambda x, y: case.eta(x, y, t),
                       lambda x, y: case.grad_eta(x, y, t))
    ep = volume_errors(s.Qp, state.pp, lambda x, y: case.pp(x, y, t),
                       lambda x, y: case.grad_pp(x, y, t))
    return {
        "err_u_L2": eu[0], "err_u_H1": eu[1], "err_pf_L2": epf[0],
        "err_eta_L2": ee[0], "err_eta_H1": ee[1], "err_pp_L2": ep[0], "err_pp_H1": ep[1],
        "err_g1": interface_error(s.G1, state.g1, lambda x, y: case.g1(x, y, t)),
        "err_g2": interface_error(s.G2, state.g2, lambda x, y: case.g2(x, y, t)),
        "err_lam": interface_error(s.L, state.lam, lambda x, y: case.lam(x, y, t)),
    }


@dataclass
class ConvergenceTable:
    rows: list  # dicts with level, h, dt, n_steps and the error columns

    def rates(self, key: str) -> list:
        out = []
        for a, b in zip(self.rows[:-1], self.rows[1:]):
            if a[key] > 0 and b[key] > 0:
                out.append(log(a[key] / b[key]) / log(a["h"] / b["h"]))
            else:
                out.append(float("nan"))
        return out

    @property
    def columns(self) -> tuple:
        return (("level", "h", "dt") + ERROR_COLUMNS
                + tuple(f"rate_{k}" for k in RATE_FIELDS))

    def as_rows(self) -> list:
        rates = {k: [float("nan")] + self.rates(k) for k in RATE_FIELDS}
        out = []
        for i, r in enumerate(self.rows):
            out.append([r["level"], r["h"], r["dt"]] + [r[k] for k in ERROR_COLUMNS]
                       + [rates[k][i] for k in RATE_FIELDS])
        return out


def default_dt_rule(h: float) -> float:
    return h * h / 4


def convergence_study(case, levels: int = 3, dt_rule=default_dt_rule, n0: int = 4,
                      T: float = 1.0 / 16, params: PhysicalParams = None,
                      defects: bool = False) -> ConvergenceTable:
    """Errors at time T on n0 * 2^l cells per side, dt = dt_rule(h)."""
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if isinstance(case, str):
        case = manufactured_case(case, params)
    rows = []
    for lev in range(levels):
        n = n0 * 2**lev
        h = 1.0 / n
        dt = dt_rule(h)
        n_steps = max(1, int(round(T / dt)))
        cfg = RunConfig(params=case.params, dt=dt, n_steps=n_steps, nx_f=n, ny_f=n, nx_p=n,
                        ny_p=n, case=case.name, defects=defects,
                        fluid_dirichlet=case.bc["fluid_dirichlet"],
                        poro_disp_dirichlet=case.bc["poro_disp_dirichlet"],
                        poro_pres_dirichlet=case.bc["poro_pres_dirichlet"])
        spaces, system = build_problem(cfg)
        fact = solver.factorize(full_matrix(system))
        state = init_state(spaces, case.initial_data(), dt)
        for _ in range(n_steps):
            state, _, _ = step(system, state, case.load_data((state.n + 1) * dt, defects), fact=fact)
        row = {"level": lev, "h": h, "dt": dt, "n_steps": n_steps}
        row.update(state_errors(case, state))
        rows.append(row)
    return ConvergenceTable(rows)


def interpolation_study(case, levels: int = 3, n0: int = 4, t: float = 0.0) -> ConvergenceTable:
    """Interpolation errors only (no solve), same table layout."""
    if isinstance(case, str):
        case = manufactured_case(case)
    rows = []
    for lev in range(levels):
        n = n0 * 2**lev
        cfg = RunConfig(params=case.params, nx_f=n, ny_f=n, nx_p=n, ny_p=n)
        spaces, _ = build_problem(cfg)
        st = init_state(spaces, InitialData(lambda x, y: case.u(x, y, t),
                                            lambda x, y: case.eta(x, y, t),
                                            lambda x, y: case.eta_t(x, y, t),
                                            lambda x, y: case.pp(x, y, t)), 1.0)
        st = _with_exact_multipliers(case, st, t)
        row = {"level": lev, "h": 1.0 / n, "dt": 0.0, "n_steps": 0}
        row.update(state_errors(case, st))
        rows.append(row)
    return ConvergenceTable(rows)


def _with_exact_multipliers(case, st, t):
    from dataclasses import replace
    s = st.spaces
    pf = s.Qf.interpolate(lambda x, y: case.pf(x, y, t))
    lam = s.L.interpolate(lambda x, y: case.lam(x, y, t))
    mid = s.G1.node_coords
    g1 = np.asarray(case.g1(mid[:, 0], mid[:, 1], t), dtype=float) * np.ones(len(mid))
    g2 = np.asarray(case.g2(mid[:, 0], mid[:, 1], t), dtype=float) * np.ones(len(mid))
    return replace(st, pf=pf, lam=lam, g1=g1, g2=g2)


# ---------------------------------------------------------------------------
# oracle

def oracle_dense_solve(system, rhs) -> np.ndarray:
    """Solve the full system by dense Gaussian elimination with partial pivoting."""
    K = full_matrix(system) if hasattr(system, "A_M") else system
    K = K.toarray() if hasattr(K, "toarray") else np.asarray(K, dtype=float)
    if K.shape[0] > ORACLE_MAX_DOFS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_DOFS} DOFs, got {K.shape[0]}")
    b = np.asarray(rhs, dtype=float)
    B = b.reshape(len(b), -1)
    x, ok = _kernels.gauss_solve(np.ascontiguousarray(K), np.ascontiguousarray(B), 1e-14)
    if not ok:
        raise Singular("dense elimination hit a zero pivot")
    return x.reshape(b.shape)
