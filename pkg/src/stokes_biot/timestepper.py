"""Backward Euler time loop in scaled variables with unscaled state output."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import solver
from .elements import Spaces, build_spaces
from .errors import DimensionMismatch, MissingInitialData, NonPositiveParam
from .forms import History, LoadData, PhysicalParams, assemble_load, lambda_row_load
from .mesh import stacked_rects
from .system import BlockSystem, build_block_system, build_rhs, full_matrix


@dataclass(frozen=True, eq=False)
class State:
    """Unscaled coefficients at step n plus the history the loads and energy need.

    ``eta_prev`` is eta^{n-1}; ``eta_dot = (eta - eta_prev)/dt``; ``u_prev``,
    ``pp_prev`` and ``eta_dot_prev`` are the step n-1 values (equal to the
    current ones at n = 0, so every backward difference vanishes there).
    """

    spaces: Spaces
    dt: float
    n: int
    u: np.ndarray
    eta: np.ndarray
    pp: np.ndarray
    pf: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    lam: np.ndarray
    eta_prev: np.ndarray
    eta_dot: np.ndarray
    u_prev: np.ndarray
    pp_prev: np.ndarray
    eta_dot_prev: np.ndarray

    @property
    def t(self) -> float:
        return self.n * self.dt

    def history(self) -> History:
        return History(u=self.u, eta_hat=self.eta / self.dt,
                       eta_hat_prev=self.eta_prev / self.dt, pp_hat=self.dt * self.pp)


@dataclass
class InitialData:
    """Initial fields as callables ``f(x, y)`` or coefficient arrays."""

    u0: object = None
    eta0: object = None
    eta_dot0: object = None
    pp0: object = None


def _coeffs(space, value, name):
    if value is None:
        raise MissingInitialData(f"initial field {name!r} is missing")
    if callable(value):
        out = space.interpolate(value).astype(float)
    else:
        out = np.array(value, dtype=float)
        if out.shape != (space.ndofs,):
            raise DimensionMismatch(f"{name} has shape {out.shape}, expected ({space.ndofs},)")
    out[space.dirichlet_mask] = 0.0
    return out


def init_state(spaces: Spaces, initial_data: InitialData, dt: float) -> State:
    """State at n = 0 with eta^{-1} = eta^0 - dt * eta_dot^0; p_f and multipliers zero."""
    if dt <= 0:
        raise NonPositiveParam(f"dt must be > 0, got {dt}")
    if initial_data is None:
        raise MissingInitialData("no initial data")
    u = _coeffs(spaces.U, initial_data.u0, "u0")
    eta = _coeffs(spaces.X, initial_data.eta0, "eta0")
    eta_dot = _coeffs(spaces.X, initial_data.eta_dot0, "eta_dot0")
    pp = _coeffs(spaces.Qp, initial_data.pp0, "pp0")
    eta_prev = eta - dt * eta_dot
    return State(spaces, float(dt), 0, u, eta, pp, np.zeros(spaces.Qf.ndofs),
                 np.zeros(spaces.G1.ndofs), np.zeros(spaces.G2.ndofs), np.zeros(spaces.L.ndofs),
                 eta_prev, eta_dot, u.copy(), pp.copy(), eta_dot.copy())


def assemble_rhs(system: BlockSystem, state: State, data: Optional[LoadData]) -> np.ndarray:
    sp_, p, dt = system.spaces, system.params, system.dt
    h = state.history()
    data = data or LoadData()
    F = {k: assemble_load(k, sp_, data, h, p, dt) for k in ("F1", "F2", "F3", "F4")}
    FL = lambda_row_load(sp_, data, p, dt, system.S)
    return build_rhs(system, F["F1"], F["F2"], F["F3"], F["F4"], FL)


def unscale(system: BlockSystem, state: State, x) -> State:
    """New state from a scaled solution vector ``x``."""
    dt = system.dt
    f = system.split(x)
    u = np.array(f["U"])
    eta = dt * f["X"]
    eta_dot = (eta - state.eta) / dt
    return State(state.spaces, dt, state.n + 1, u, eta, f["Qp"] / dt, f["Qf"] / dt,
                 f["G1"] / dt, f["G2"] / dt, np.array(f["L"]), state.eta.copy(), eta_dot,
                 state.u, state.pp, state.eta_dot)


def step(system: BlockSystem, state: State, data_at_next_time: Optional[LoadData] = None,
         dt: Optional[float] = None, fact: Optional[solver.Factorization] = None):
    """Advance one step; returns ``(new_state, scaled_solution, rhs)``."""
    if dt is not None and dt != system.dt:
        raise DimensionMismatch(f"dt {dt} differs from the system's dt {system.dt}")
    if state.dt != system.dt:
        raise DimensionMismatch("state and system use different dt")
    fact = fact or solver.factorize(full_matrix(system))
    rhs = assemble_rhs(system, state, data_at_next_time)
    x = solver.solve(fact, rhs)
    return unscale(system, state, x), x, rhs


@dataclass
class RunConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    dt: float = 0.01
    n_steps: int = 10
    fluid_rect: tuple = (0.0, 0.0, 1.0, 1.0)
    poro_rect: tuple = (0.0, 1.0, 1.0, 2.0)
    nx_f: int = 4
    ny_f: int = 4
    nx_p: int = 4
    ny_p: int = 4
    fluid_dirichlet: tuple = ("left", "right")
    poro_disp_dirichlet: tuple = ("top",)
    poro_pres_dirichlet: tuple = ("top",)
    case: str = "random"
    seed: int = 0
    defects: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise NonPositiveParam(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 1:
            raise NonPositiveParam(f"n_steps must be >= 1, got {self.n_steps}")


def build_problem(config: RunConfig):
    """Meshes, spaces and block system described by ``config``."""
    mesh_f, mesh_p, iface = stacked_rects(
        config.fluid_rect, config.poro_rect, config.nx_f, config.ny_f, config.nx_p, config.ny_p,
        fluid_dirichlet=config.fluid_dirichlet, disp_dirichlet=config.poro_disp_dirichlet,
        pres_dirichlet=config.poro_pres_dirichlet)
    spaces = build_spaces(mesh_f, mesh_p, iface)
    return spaces, build_block_system(spaces, config.params, config.dt, check_grams=False)


def random_initial_data(spaces: Spaces, seed: int = 0, amplitude: float = 1.0) -> InitialData:
    """Uniform random coefficients in [-amplitude, amplitude]."""
    rng = np.random.default_rng(seed)
    u, eta, eta_dot, pp = (amplitude * rng.uniform(-1.0, 1.0, s.ndofs)
                           for s in (spaces.U, spaces.X, spaces.X, spaces.Qp))
    return InitialData(u, eta, eta_dot, pp)


def run(config: RunConfig, on_step: Optional[Callable] = None):
    """Run ``config.n_steps`` steps; returns ``(states, reports)``.

    ``config.case`` is ``"random"`` (random initial data, zero forcing) or a
    manufactured case id. ``on_step(state, report)`` is called after each step.
    """
    from . import analysis, verification

    spaces, system = build_problem(config)
    fact = solver.factorize(full_matrix(system))
    case = None
    if config.case == "random":
        init = random_initial_data(spaces, config.seed)
    else:
        case = verification.manufactured_case(config.case, config.params)
        init = case.initial_data()
    state = init_state(spaces, init, config.dt)
    states = [state]
    reports = [analysis.energy(state, config.params, config.dt)]
    for _ in range(config.n_steps):
        t_next = (state.n + 1) * config.dt
        data = None if case is None else case.load_data(t_next, defects=config.defects)
        new, _, _ = step(system, state, data, fact=fact)
        rep = analysis.energy(new, config.params, config.dt)
        if analysis.has_defects(data):
            res = float("nan")  # balance does not account for interface defect loads
        else:
            res = analysis.check_energy_identity(state, new, data, config.params, config.dt)
        rep = replace(rep, identity_residual=res)
        states.append(new)
        reports.append(rep)
        if on_step is not None:
            on_step(new, rep)
        state = new
    return states, reports
