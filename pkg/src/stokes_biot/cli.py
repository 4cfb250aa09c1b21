"""Command line entry point: run, infsup, coercivity, converge, energy-check."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import analysis, io, verification
from .errors import Singular, SingularBlock, NotSPD, StokesBiotError
from .system import full_matrix
from .timestepper import build_problem, run

EXIT_OK, EXIT_NUMERIC, EXIT_INVALID = 0, 1, 2
INFSUP_FLOOR = 1e-3
INFSUP_BAND = 1.25
COERCIVITY_SLACK = 1e-9
IDENTITY_TOL = 1e-9


def _refined(cfg, factor):
    r = cfg.run
    return replace(r, nx_f=r.nx_f * factor, ny_f=r.ny_f * factor,
                   nx_p=r.nx_p * factor, ny_p=r.ny_p * factor)


def _cmd_run(cfg, args):
    states, reports = run(cfg.run)
    out = cfg.output_dir
    io.write_energy_csv(os.path.join(out, "energy.csv"), reports)
    final = states[-1]
    s = final.spaces
    if cfg.emit_vtk:
        io.write_vtk(s.mesh_f, {"velocity": io.vertex_values(s.U, final.u),
                                "pf": io.vertex_values(s.Qf, final.pf)},
                     os.path.join(out, "fluid.vtk"))
        io.write_vtk(s.mesh_p, {"displacement": io.vertex_values(s.X, final.eta),
                                "pp": io.vertex_values(s.Qp, final.pp)},
                     os.path.join(out, "poro.vtk"))
    if cfg.emit_matrices:
        _, system = build_problem(cfg.run)
        io.write_matrix_market(os.path.join(out, "system.mtx"), full_matrix(system))
    res = np.array([r.identity_residual for r in reports[1:]])
    worst = f"{np.abs(res).max():.3e}" if np.isfinite(res).all() else "n/a (defect loads)"
    print(f"steps={len(states) - 1} E0={reports[0].E:.6e} EN={reports[-1].E:.6e} "
          f"max_identity_residual={worst}")
    print(f"wrote {os.path.join(out, 'energy.csv')}")
    return EXIT_OK


def _cmd_coercivity(cfg, args):
    ok = True
    for lev in range(args.levels):
        rc = _refined(cfg, 2**lev)
        _, system = build_problem(rc)
        est = analysis.estimate_coercivity(system)
        a1 = analysis.alpha1_formula(rc.params, rc.dt)
        passed = est >= a1 - COERCIVITY_SLACK
        ok &= passed
        print(f"mesh {rc.nx_f}x{rc.ny_f}: estimate={est:.12e} alpha1={a1:.12e} "
              f"{'PASS' if passed else 'FAIL'}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_infsup(cfg, args):
    values = []
    for lev in range(args.levels):
        rc = _refined(cfg, 2**lev)
        _, system = build_problem(rc)
        b = analysis.estimate_inf_sup(system)
        values.append(b)
        print(f"mesh {rc.nx_f}x{rc.ny_f}: beta2={b:.6e}")
    ratio = max(values) / min(values) if min(values) > 0 else float("inf")
    ok = min(values) > INFSUP_FLOOR and ratio <= INFSUP_BAND
    print(f"min={min(values):.6e} band={ratio:.4f} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_converge(cfg, args):
    case = cfg.run.case if cfg.run.case in verification.CASES else "trig"
    # manufactured fields only satisfy the interface conditions with defect loads
    defects = cfg.run.defects if "defects" in cfg.lines else True
    table = verification.convergence_study(case, levels=args.levels, n0=cfg.run.nx_f,
                                           params=cfg.run.params, defects=defects)
    path = os.path.join(cfg.output_dir, "convergence.csv")
    io.write_convergence_csv(path, table)
    for k in verification.RATE_FIELDS:
        rates = " ".join(f"{r:.3f}" for r in table.rates(k))
        print(f"{k}: {rates}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_energy_check(cfg, args):
    rc = cfg.run
    rc = replace(rc, case="random", n_steps=args.steps or rc.n_steps)
    states, reports = run(rc)
    scale = reports[0].E / rc.dt
    worst = max(abs(r.identity_residual) for r in reports[1:])
    monotone = all(b.E <= a.E for a, b in zip(reports[:-1], reports[1:]))
    io.write_energy_csv(os.path.join(cfg.output_dir, "energy.csv"), reports)
    consts = analysis.stability_constants(rc.params, rc.dt, rc.n_steps, cfg.domain_consts)
    lhs, rhs = analysis.gronwall_bound(states[0], states[-1], rc.params, rc.dt, consts)
    ok = worst <= IDENTITY_TOL * scale and monotone and lhs <= rhs
    print(f"steps={rc.n_steps} max_residual/(E0/dt)={worst / scale:.3e} "
          f"monotone={monotone} bound={lhs:.3e}<={rhs:.3e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"run": _cmd_run, "infsup": _cmd_infsup, "coercivity": _cmd_coercivity,
            "converge": _cmd_converge, "energy-check": _cmd_energy_check}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stokes-biot",
                                     description="Stokes-Biot interface solver and checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="key = value configuration file")
        if name in ("infsup", "coercivity", "converge"):
            p.add_argument("--levels", type=int, default=3)
        if name == "energy-check":
            p.add_argument("--steps", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        cfg = io.read_config(args.config)
        if getattr(args, "levels", 1) < 1 or (args.command == "converge" and args.levels < 3):
            raise ValueError("--levels is too small for this command")
        if getattr(args, "steps", None) is not None and args.steps < 1:
            raise ValueError("--steps must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except (Singular, SingularBlock, NotSPD, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StokesBiotError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
