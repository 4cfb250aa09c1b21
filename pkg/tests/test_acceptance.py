"""One pass/fail line per acceptance criterion, at the stated tolerances."""

import time
from math import exp, sqrt

import numpy as np
import pytest

from stokes_biot import analysis, solver
from stokes_biot.elements import build_spaces
from stokes_biot.forms import (PhysicalParams, assemble_h_half_gram, slobodeckij_matrix,
                               slobodeckij_seminorm_sq)
from stokes_biot.mesh import stacked_rects
from stokes_biot.system import build_block_system, full_matrix
from stokes_biot.timestepper import RunConfig, init_state, random_initial_data, run, step
from stokes_biot.verification import ORACLE_MAX_DOFS, convergence_study, oracle_dense_solve

from conftest import spaces_for

PARAM_SETS = {
    "ones": (PhysicalParams(eps_bar=1.0), 1.0),
    "ones_small_eps": (PhysicalParams(), 0.01),
    "set2": (PhysicalParams(rho_f=1, nu_f=0.01, kappa=1e-3, s0=1e-2, beta_bjs=10, eps_bar=1e-4),
             0.05),
}
MESHES = (1, 2, 4, 8)


def acceptance_systems(meshes=MESHES):
    for n in meshes:
        for name, (p, dt) in PARAM_SETS.items():
            yield n, name, build_block_system(spaces_for(n), p, dt, check_grams=False)


def test_1_energy_identity(acceptance):
    t0 = time.perf_counter()
    cfg = RunConfig(params=PhysicalParams(), dt=0.01, n_steps=100, seed=0)
    states, reports = run(cfg)
    elapsed = time.perf_counter() - t0
    scale = reports[0].E / cfg.dt
    worst = max(abs(r.identity_residual) for r in reports[1:])
    monotone = all(b.E <= a.E for a, b in zip(reports[:-1], reports[1:]))
    consts = analysis.stability_constants(cfg.params, cfg.dt, cfg.n_steps)
    lhs, rhs = analysis.gronwall_bound(states[0], states[-1], cfg.params, cfg.dt, consts)
    ok = worst <= 1e-9 * scale and monotone and lhs <= rhs and elapsed < 30
    assert acceptance(1, ok, f"max|res|/(E0/dt)={worst / scale:.2e} monotone={monotone} "
                             f"bound {lhs:.2e}<={rhs:.2e} time={elapsed:.1f}s")


def test_2_coercivity(acceptance):
    t0 = time.perf_counter()
    worst = np.inf
    for n, name, system in acceptance_systems((1, 2, 4)):
        gap = analysis.estimate_coercivity(system) - analysis.alpha1_formula(system.params,
                                                                             system.dt)
        worst = min(worst, gap)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-9 and elapsed < 60
    assert acceptance(2, ok, f"min(estimate - alpha1)={worst:.2e} time={elapsed:.1f}s")


def test_3_inf_sup(acceptance):
    t0 = time.perf_counter()
    values = []
    for n in (2, 4, 8):
        system = build_block_system(spaces_for(n), PhysicalParams(), 0.01)
        values.append(analysis.estimate_inf_sup(system))
    elapsed = time.perf_counter() - t0
    band = max(values) / min(values)
    ok = min(values) > 1e-3 and band <= 1.25 and elapsed < 120
    assert acceptance(3, ok, "beta2=" + ",".join(f"{v:.4f}" for v in values)
                      + f" band={band:.3f} time={elapsed:.1f}s")


def test_4_unique_solvability(acceptance):
    failures = []
    count = 0
    for n, name, system in acceptance_systems():
        count += 1
        try:
            solver.factorize(full_matrix(system))
        except solver.Singular:
            failures.append((n, name))
    assert acceptance(4, not failures, f"{count} systems factorized, singular={failures}")


def test_5_oracle_equivalence(acceptance):
    rng = np.random.default_rng(0)
    worst, count = 0.0, 0
    for n, name, system in acceptance_systems():
        K = full_matrix(system)
        if K.shape[0] > ORACLE_MAX_DOFS:
            continue
        count += 1
        rhs = rng.normal(size=K.shape[0])
        rhs[:system.n_M][system.dirichlet_M] = 0.0
        x = solver.solve(solver.factorize(K), rhs)
        y = oracle_dense_solve(K, rhs)
        worst = max(worst, np.linalg.norm(x - y) / np.linalg.norm(y))
    assert count > 0
    assert acceptance(5, worst <= 1e-9, f"{count} systems, max relative difference={worst:.2e}")


def test_6_interface_conditions(acceptance):
    system = build_block_system(spaces_for(4), PhysicalParams(), 0.01, check_grams=False)
    fact = solver.factorize(full_matrix(system))
    state = init_state(system.spaces, random_initial_data(system.spaces, 0), system.dt)
    worst = {"flux": 0.0, "pressure": 0.0, "slip": 0.0}
    for _ in range(100):
        new, x, _ = step(system, state, fact=fact)
        for k, v in analysis.interface_residuals(system, state, new, x).items():
            worst[k] = max(worst[k], v)
        state = new
    ok = max(worst.values()) <= 1e-10
    assert acceptance(6, ok, " ".join(f"{k}={v:.2e}" for k, v in worst.items()))


def test_7_manufactured_convergence(acceptance):
    t0 = time.perf_counter()
    table = convergence_study("trig", levels=3, n0=4, defects=True)
    rates = {k: min(table.rates(k)) for k in ("err_u_L2", "err_eta_L2", "err_pp_L2")}
    ok = all(r >= 1.7 for r in rates.values())
    detail = " ".join(f"{k[4:]}={v:.2f}" for k, v in rates.items())
    assert acceptance(7, ok, f"min rates {detail} time={time.perf_counter() - t0:.1f}s")


def test_8_h_half_machinery(acceptance):
    const_ok, lin_err, spd = True, 0.0, True
    meshes = [np.linspace(0, 1, n + 1) for n in (1, 2, 4, 8, 16)]
    meshes.append(np.array([0.0, 0.05, 0.3, 0.31, 0.7, 1.0]))
    for s in meshes:
        const_ok &= slobodeckij_seminorm_sq(s, np.full(len(s), 2.5)) == 0.0
        lin_err = max(lin_err, abs(slobodeckij_seminorm_sq(s, s) - 1.0),
                      abs(s @ slobodeckij_matrix(s) @ s - 1.0))
    for n in MESHES + (16,):
        S = assemble_h_half_gram(spaces_for(n).L).toarray()
        spd &= bool(np.allclose(S, S.T) and np.linalg.eigvalsh(S).min() > 0)
    S = assemble_h_half_gram(build_spaces(*stacked_rects((0, 0, 3, 1), (0, 1, 3, 2), 5, 2, 5, 2)).L)
    spd &= bool(np.linalg.eigvalsh(S.toarray()).min() > 0)
    ok = const_ok and lin_err <= 1e-6 and spd
    assert acceptance(8, ok, f"constant=0:{const_ok} |linear-1|={lin_err:.1e} gram_spd={spd}")


def test_9_stability_constants(acceptance):
    ok = True
    for N in (1, 10, 100):
        c = analysis.stability_constants(PhysicalParams(eps_bar=1.0), 1.0, N, (1.0, 1.0, 1.0))
        a = 1 + 2 * sqrt(2)
        eps1 = 1 / (140 * a**2)
        eps2 = 1 - 141 * eps1
        C_star = exp((N + 1) / eps2 * (1 + 140 * eps1))
        ok &= (c.eps1 > 0 and c.eps2 > 0 and c.C_bar > 0
               and c.eps1 == pytest.approx(eps1, rel=1e-14)
               and c.eps2 == pytest.approx(eps2, rel=1e-14)
               and c.K3 == 1 + 1 / N and c.K1 == 2 and c.K2 == pytest.approx(1.0, rel=1e-15)
               and c.C_bar == pytest.approx(0.5, rel=1e-14)
               and c.C_star == pytest.approx(C_star, rel=1e-13))
    assert acceptance(9, ok, f"eps1={c.eps1:.6e} eps2={c.eps2:.6f} C_bar={c.C_bar} "
                             f"C*={c.C_star:.6e} (N=100)")
