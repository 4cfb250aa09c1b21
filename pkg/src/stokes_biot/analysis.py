"""Energy monitoring, stability constants, and coercivity / inf-sup estimates."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from functools import lru_cache
from math import exp, sqrt
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import solver
from .elements import Spaces
from .errors import HistoryMismatch, NonPositiveParam, NotSPD
from .forms import (LoadData, PhysicalParams, assemble_h_half_gram, div_div_matrix,
                    interface_mass, interface_trace_pairing, mass_matrix, neumann_load, stiffness_matrix,
                    strain_matrix, volume_load)
from .mesh import NEUMANN_F, NEUMANN_P, NEUMANN_S

ENERGY_COLUMNS = ("n", "t", "E", "diss_eta_dd", "diss_u_d", "diss_pp_d", "diss_eta_E",
                  "diss_Du", "diss_gradpp", "diss_g2", "diss_lambda", "identity_residual")
DOMAIN_CONSTANTS = (2.0, 2.0, 1.0)  # C_T, C_K, C_P
DIM = 2


@dataclass(frozen=True)
class EnergyReport:
    """Energy and dissipation terms at step n.

    The lambda term uses eps_bar / dt, the weight that multiplies
    ||lambda||_{1/2}^2 once the scaled system is written per unit time.
    """

    n: int
    t: float
    E: float
    diss_eta_dd: float
    diss_u_d: float
    diss_pp_d: float
    diss_eta_E: float
    diss_Du: float
    diss_gradpp: float
    diss_g2: float
    diss_lambda: float
    identity_residual: float = 0.0

    def row(self) -> tuple:
        return astuple(self)


@lru_cache(maxsize=64)
def _norm_ops(spaces: Spaces):
    return {
        "MU": mass_matrix(spaces.U), "MX": mass_matrix(spaces.X), "MQ": mass_matrix(spaces.Qp),
        "DU": strain_matrix(spaces.U), "DX": strain_matrix(spaces.X),
        "divX": div_div_matrix(spaces.X), "KQ": stiffness_matrix(spaces.Qp),
        "MG2": mass_matrix(spaces.G2), "S": assemble_h_half_gram(spaces.L),
    }


def _q(A, x):
    return float(x @ (A @ x))


def energy_norm_sq(spaces: Spaces, eta, params: PhysicalParams) -> float:
    """||eta||_E^2 = 2 nu_p ||D(eta)||^2 + lambda ||div eta||^2."""
    ops = _norm_ops(spaces)
    return 2 * params.nu_p * _q(ops["DX"], eta) + params.lambda_lame * _q(ops["divX"], eta)


def energy(state, params: PhysicalParams, dt: float) -> EnergyReport:
    """E^n and the dissipation terms built from backward differences stored in ``state``."""
    sp_ = state.spaces
    ops = _norm_ops(sp_)
    p = params
    E = (p.rho_f * _q(ops["MU"], state.u) + p.rho_p * _q(ops["MX"], state.eta_dot)
         + p.s0 * _q(ops["MQ"], state.pp) + energy_norm_sq(sp_, state.eta, p))
    u_d = (state.u - state.u_prev) / dt
    eta_dd = (state.eta_dot - state.eta_dot_prev) / dt
    pp_d = (state.pp - state.pp_prev) / dt
    return EnergyReport(
        n=state.n, t=state.n * dt, E=E,
        diss_eta_dd=p.rho_p * dt * _q(ops["MX"], eta_dd),
        diss_u_d=p.rho_f * dt * _q(ops["MU"], u_d),
        diss_pp_d=p.s0 * dt * _q(ops["MQ"], pp_d),
        diss_eta_E=dt * energy_norm_sq(sp_, state.eta_dot, p),
        diss_Du=2 * p.nu_f * _q(ops["DU"], state.u),
        diss_gradpp=p.kappa * _q(ops["KQ"], state.pp),
        diss_g2=2.0 / p.beta_bjs * _q(ops["MG2"], state.g2),
        diss_lambda=2.0 * p.eps_bar / dt * _q(ops["S"], state.lam),
    )


DEFECT_FIELDS = ("rho1", "rho2", "rho3", "d_s", "lam_star")


def has_defects(loads: Optional[LoadData]) -> bool:
    return loads is not None and any(getattr(loads, k) is not None for k in DEFECT_FIELDS)


def external_work(spaces: Spaces, state, loads: Optional[LoadData]) -> float:
    """<f_f, u> + <f_eta, eta_dot> + <f_p, p_p> including Neumann data."""
    if loads is None:
        return 0.0
    if has_defects(loads):
        raise ValueError("the energy identity only covers volume and Neumann data")
    fu = volume_load(spaces.U, loads.f_f) + neumann_load(spaces.U, NEUMANN_F, loads.u_N)
    fx = volume_load(spaces.X, loads.f_eta) + neumann_load(spaces.X, NEUMANN_S, loads.eta_N)
    fq = volume_load(spaces.Qp, loads.f_p) + neumann_load(spaces.Qp, NEUMANN_P, loads.p_N)
    return float(fu @ state.u + fx @ state.eta_dot + fq @ state.pp)


def check_energy_identity(prev, next, loads, params: PhysicalParams, dt: float) -> float:
    """Residual of the per-step energy balance obtained by testing with the new solution."""
    if (next.n != prev.n + 1 or next.spaces is not prev.spaces or next.dt != dt
            or prev.dt != dt or not np.array_equal(next.eta_prev, prev.eta)
            or not np.array_equal(next.u_prev, prev.u)
            or not np.array_equal(next.eta_dot_prev, prev.eta_dot)):
        raise HistoryMismatch("next is not the successor of prev")
    r0 = energy(prev, params, dt)
    r1 = energy(next, params, dt)
    return ((r1.E - r0.E) / (2 * dt)
            + 0.5 * (r1.diss_eta_dd + r1.diss_u_d + r1.diss_pp_d + r1.diss_eta_E)
            + r1.diss_Du + r1.diss_gradpp + 0.5 * r1.diss_g2 + 0.5 * r1.diss_lambda
            - external_work(next.spaces, next, loads))


def interface_residuals(system, prev, next, x) -> dict:
    """Relative weak residuals of the three interface equations after one step.

    ``x`` is the scaled solution. The pressure-matching equation is checked in
    the scaled unknowns, where its stabilization term is eps_bar (lambda, mu)_{1/2}.
    """
    s = system.spaces
    f = system.split(x)
    it = s.iface
    # <u.n_f + eta_dot.n_p - lambda, s1>
    t1 = interface_trace_pairing(s.G1, s.U, it.n_f) @ next.u
    t2 = interface_trace_pairing(s.G1, s.X, it.n_p) @ next.eta_dot
    t3 = interface_mass(s.G1, s.L) @ next.lam
    r_flux = t1 + t2 - t3
    # <g1_hat, mu> + (pp_hat, mu) + eps_bar (lambda, mu)_{1/2}
    a1 = interface_mass(s.G1, s.L).T @ f["G1"]
    a2 = interface_trace_pairing(s.L, s.Qp) @ f["Qp"]
    a3 = system.params.eps_bar * (system.S @ f["L"])
    r_press = a1 + a2 + a3
    # (1/beta)(g2, s2) + (u.tau, s2) - (eta_dot.tau, s2)
    b1 = interface_mass(s.G2, s.G2, 1.0 / system.params.beta_bjs) @ next.g2
    b2 = interface_trace_pairing(s.G2, s.U, it.tau) @ next.u
    b3 = interface_trace_pairing(s.G2, s.X, it.tau) @ next.eta_dot
    r_slip = b1 + b2 - b3

    def rel(r, *parts):
        scale = max(np.linalg.norm(p) for p in parts)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))

    return {"flux": rel(r_flux, t1, t2, t3), "pressure": rel(r_press, a1, a2, a3),
            "slip": rel(r_slip, b1, b2, b3)}


# ---------------------------------------------------------------------------
# constants

def _check_positive(params: PhysicalParams, dt):
    for f in fields(params):
        if f.name == "eps_bar_zero_override":
            continue
        if getattr(params, f.name) <= 0:
            raise NonPositiveParam(f"{f.name} must be > 0")
    if dt <= 0:
        raise NonPositiveParam("dt must be > 0")


def alpha1_formula(params: PhysicalParams, dt: float) -> float:
    """Coercivity constant min{rho_f, 2nu_f dt, rho_p, 2nu_p dt^2, s0/dt^2, kappa/dt, 1/(beta dt), eps_bar}."""
    _check_positive(params, dt)
    p = params
    return min(p.rho_f, 2 * p.nu_f * dt, p.rho_p, 2 * p.nu_p * dt**2, p.s0 / dt**2,
               p.kappa / dt, 1 / (p.beta_bjs * dt), p.eps_bar)


@dataclass(frozen=True)
class StabilityConstants:
    alpha1: float
    eps1: float
    eps2: float
    C_bar: float
    C_star: float
    C_eta: float
    C1: float
    C2: float
    C_KP: float
    K1: float
    K2: float
    K3: float


def stability_constants(params: PhysicalParams, dt: float, N: int,
                        domain_consts=DOMAIN_CONSTANTS, beta2: Optional[float] = None,
                        C_KP: Optional[float] = None) -> StabilityConstants:
    """Closed-form constants of the energy estimate.

    ``domain_consts = (C_T, C_K, C_P)``; C_KP defaults to the Korn-Poincare
    combination max(1 + C_P^2 C_K^2, 1 + C_P^2). The stabilization weight is
    eps_bar / dt (see ``EnergyReport``). ``beta2=None`` drops the inf-sup
    entry from the minimum defining C_bar.
    """
    _check_positive(params, dt)
    if N < 1:
        raise NonPositiveParam("N must be >= 1")
    C_T, C_K, C_P = (float(c) for c in domain_consts)
    if min(C_T, C_K, C_P) <= 0:
        raise NonPositiveParam("domain constants must be > 0")
    p = params
    eb = p.eps_bar / dt
    if C_KP is None:
        C_KP = max(1 + C_P**2 * C_K**2, 1 + C_P**2)
    C_eta = C_KP / (2 * p.nu_p)
    C1 = C_T * sqrt(C_KP)
    C2 = sqrt(DIM) * C_K * C_P
    K1 = max(2 * p.nu_p, DIM * p.lambda_lame * C_K**2)
    K2 = max(C1**2 / (2 * p.nu_p), p.alpha**2 / p.lambda_lame)
    K3 = 1 + 1 / N
    a = p.kappa + C1 + p.alpha * C2
    eps1 = 0.5 * min(
        1 / (70 * p.rho_p), 1 / (70 * p.rho_f), 1 / (70 * p.s0), 1 / (70 * K2),
        2 * p.nu_f / (70 * dt * (2 * p.nu_f + C1)**2),
        p.kappa / (70 * dt * a**2),
        2 / (70 * p.beta_bjs * dt * (2 * C_T + 1 / p.beta_bjs)**2),
        2 * eb / (70 * dt * (C_T + eb)**2),
        1 / (dt**2 * (C_eta + 70 * K1)),
    )
    eps2 = 1 - dt**2 * eps1 * (C_eta + 70 * K1)
    entries = [
        eps2, K3 * p.rho_f, K3 * p.rho_p, K3 * p.s0,
        p.rho_p * dt * (1 - 70 * eps1 * p.rho_p),
        p.rho_f * dt * (1 - 70 * eps1 * p.rho_f),
        p.s0 * dt * (1 - 70 * eps1 * p.s0),
        dt * (1 - 70 * eps1 * K2),
        2 * p.nu_f - 70 * eps1 * dt * (2 * p.nu_f + C1)**2,
        p.kappa - 70 * eps1 * dt * a**2,
        2 / p.beta_bjs - 70 * eps1 * dt * (2 * C_T + 1 / p.beta_bjs)**2,
        2 * eb - 70 * eps1 * dt * (C_T + eb)**2,
    ]
    if beta2 is not None:
        entries.append(eps1 * dt * beta2**2)
    growth = (N + 1) / eps2 * (C_eta + 70 * eps1 * dt**2 * K1)
    C_star = exp(growth) if growth < 709 else float("inf")  # past the double range
    return StabilityConstants(alpha1_formula(p, dt), eps1, eps2, min(entries), C_star, C_eta,
                              C1, C2, C_KP, K1, K2, K3)



def gronwall_bound(first, last, params: PhysicalParams, dt: float,
                   consts: StabilityConstants) -> tuple[float, float]:
    """(lhs, rhs) of the final energy estimate for an unforced run.

    Only the end-state norms are kept on the left and only the initial energy
    group on the right; every dropped term is nonnegative, so lhs <= rhs is a
    sufficient check of the bound.
    """
    ops = _norm_ops(last.spaces)
    lhs = (energy_norm_sq(last.spaces, last.eta, params) + _q(ops["MU"], last.u)
           + _q(ops["MX"], last.eta_dot) + _q(ops["MQ"], last.pp))
    p = params
    e0 = (p.rho_f * _q(ops["MU"], first.u) + p.rho_p * _q(ops["MX"], first.eta_dot)
          + p.s0 * _q(ops["MQ"], first.pp)
          + (1 + 2 * consts.C_eta) * energy_norm_sq(first.spaces, first.eta, p))
    return lhs, consts.C_star / consts.C_bar * consts.K3 * e0

# ---------------------------------------------------------------------------
# eigenvalue estimates

def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


def coercivity_from_blocks(A, G) -> float:
    A = _dense(A)
    return solver.gen_eig_extreme(0.5 * (A + A.T), _dense(G), "smallest")[0]


def estimate_coercivity(system) -> float:
    """Smallest eigenvalue of sym(A_M) x = theta G_M x over the free DOFs."""
    free = system.free_M
    A = _dense(system.A_M)[np.ix_(free, free)]
    G = _dense(system.G_M)[np.ix_(free, free)]
    return coercivity_from_blocks(A, G)


def inf_sup_from_blocks(B, G_M, G_Z, rel_zero: float = 1e-10) -> float:
    """sqrt of the smallest nonzero eigenvalue of B G_M^{-1} B^T x = theta G_Z x."""
    B, G_M, G_Z = _dense(B), _dense(G_M), _dense(G_Z)
    try:
        schur = B @ sla.solve(G_M, B.T, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise NotSPD(str(exc)) from exc
    w, _ = solver.gen_eigvals(schur, G_Z)
    nz = w[w > rel_zero * max(w.max(), 0.0)]
    return float(sqrt(nz.min())) if nz.size else 0.0


def estimate_inf_sup(system) -> float:
    free = system.free_M
    B = _dense(system.B_MZ)[:, free]
    G = _dense(system.G_M)[np.ix_(free, free)]
    return inf_sup_from_blocks(B, G, system.G_Z)


def dual_norm_minus_half(s, system) -> float:
    """sqrt(s^T R S^{-1} R^T s) with R the G1 x L pairing and S the H^1/2 Gram."""
    s = np.asarray(s, dtype=float)
    R = _dense(system.R)
    y = R.T @ s
    if not np.any(y):
        return 0.0
    z = sla.solve(_dense(system.S), y, assume_a="pos")
    return float(sqrt(max(y @ z, 0.0)))
