"""Config parsing and CSV / legacy VTK / Matrix Market writers."""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io

from .errors import BadValue, IoError, MissingKey, NonMatching
from .forms import PhysicalParams
from .mesh import SIDES, _shared_side
from .timestepper import RunConfig

# ---------------------------------------------------------------------------
# config

REQUIRED = ("fluid_rect", "poro_rect", "rho_f", "nu_f", "rho_p", "nu_p", "lambda", "alpha",
            "s0", "kappa", "beta", "dt", "n_steps")
_PARAM_KEYS = {"rho_f": "rho_f", "nu_f": "nu_f", "rho_p": "rho_p", "nu_p": "nu_p",
               "lambda": "lambda_lame", "alpha": "alpha", "s0": "s0", "kappa": "kappa",
               "beta": "beta_bjs", "eps_bar": "eps_bar"}
OPTIONAL = ("eps_bar", "nx", "ny", "nx_f", "ny_f", "nx_p", "ny_p", "interface", "case", "seed",
            "output_dir", "emit_vtk", "emit_matrices", "eps_bar_zero_override", "defects",
            "C_T", "C_K", "C_P", "fluid_dirichlet", "poro_disp_dirichlet",
            "poro_pres_dirichlet")
DEFAULT_EPS_BAR = 1e-4
CASE_IDS = ("random", "trig", "poly", "zero")


@dataclass
class Config:
    run: RunConfig
    output_dir: str = "out"
    emit_vtk: bool = False
    emit_matrices: bool = False
    domain_consts: tuple = (2.0, 2.0, 1.0)
    interface: tuple = None
    lines: dict = field(default_factory=dict)


def _float(name, raw, line, positive=False, allow_zero=False):
    try:
        v = float(raw)
    except ValueError:
        raise BadValue(name, f"not a number: {raw!r}", line) from None
    if not math.isfinite(v):
        raise BadValue(name, f"must be finite, got {raw!r}", line)
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise BadValue(name, f"must be > 0, got {raw!r}", line)
    return v


def _int(name, raw, line, minimum=None):
    try:
        v = int(raw)
    except ValueError:
        raise BadValue(name, f"not an integer: {raw!r}", line) from None
    if minimum is not None and v < minimum:
        raise BadValue(name, f"must be >= {minimum}, got {v}", line)
    return v


def _bool(name, raw, line):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise BadValue(name, f"not a boolean: {raw!r}", line)


def _floats(name, raw, line, n):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != n:
        raise BadValue(name, f"expected {n} numbers, got {raw!r}", line)
    return tuple(_float(name, p, line) for p in parts)


def _sides(name, raw, line):
    parts = tuple(p for p in raw.replace(",", " ").split() if p and p != "none")
    for p in parts:
        if p not in SIDES:
            raise BadValue(name, f"unknown side {p!r}", line)
    return parts


def parse_config(text: str) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys only warn."""
    raw, where = {}, {}
    for i, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise BadValue("syntax", f"expected 'key = value', got {body!r}", i)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in REQUIRED and key not in OPTIONAL:
            warnings.warn(f"unknown config key {key!r} (line {i}) ignored", stacklevel=2)
            continue
        raw[key], where[key] = value, i
    for key in REQUIRED:
        if key not in raw:
            raise MissingKey(key)

    def get(k):
        return raw[k], where.get(k)

    override = _bool("eps_bar_zero_override", *get("eps_bar_zero_override")) \
        if "eps_bar_zero_override" in raw else False
    pvals = {}
    for key, attr in _PARAM_KEYS.items():
        if key not in raw:
            continue
        allow0 = key == "eps_bar" and override
        pvals[attr] = _float(key, *get(key), positive=True, allow_zero=allow0)
    pvals.setdefault("eps_bar", DEFAULT_EPS_BAR)
    params = PhysicalParams(**pvals, eps_bar_zero_override=override)

    fluid_rect = _floats("fluid_rect", *get("fluid_rect"), 4)
    poro_rect = _floats("poro_rect", *get("poro_rect"), 4)
    for name, r in (("fluid_rect", fluid_rect), ("poro_rect", poro_rect)):
        if not (r[2] > r[0] and r[3] > r[1]):
            raise BadValue(name, f"degenerate rectangle {r}", where[name])
    try:
        _, _, line = _shared_side(fluid_rect, poro_rect)
    except NonMatching as exc:
        raise BadValue("poro_rect", str(exc), where["poro_rect"]) from None
    interface = _floats("interface", *get("interface"), 4) if "interface" in raw else None
    if interface is not None:
        a, b = tuple(interface[:2]), tuple(interface[2:])
        if {a, b} != {tuple(line[0]), tuple(line[1])}:
            raise BadValue("interface", f"{interface} is not the shared side {line}",
                           where["interface"])
    dt = _float("dt", *get("dt"), positive=True)
    n_steps = _int("n_steps", *get("n_steps"), minimum=1)

    def opt_int(k, default):
        return _int(k, *get(k), minimum=1) if k in raw else default

    nx = opt_int("nx", 4)
    ny = opt_int("ny", nx)
    kw = dict(nx_f=opt_int("nx_f", nx), ny_f=opt_int("ny_f", ny),
              nx_p=opt_int("nx_p", nx), ny_p=opt_int("ny_p", ny))
    for k, default in (("fluid_dirichlet", ("left", "right")), ("poro_disp_dirichlet", ("top",)),
                       ("poro_pres_dirichlet", ("top",))):
        kw[k] = _sides(k, *get(k)) if k in raw else default
    case = raw.get("case", "random")
    if case not in CASE_IDS:
        raise BadValue("case", f"unknown case {case!r}", where.get("case"))
    seed = _int("seed", *get("seed")) if "seed" in raw else 0
    defects = _bool("defects", *get("defects")) if "defects" in raw else False
    run = RunConfig(params=params, dt=dt, n_steps=n_steps, fluid_rect=fluid_rect,
                    poro_rect=poro_rect, case=case, seed=seed, defects=defects, **kw)

    consts = []
    for k, default in (("C_T", 2.0), ("C_K", 2.0), ("C_P", 1.0)):
        consts.append(_float(k, *get(k), positive=True) if k in raw else default)
    return Config(
        run=run,
        output_dir=raw.get("output_dir", "out"),
        emit_vtk=_bool("emit_vtk", *get("emit_vtk")) if "emit_vtk" in raw else False,
        emit_matrices=_bool("emit_matrices", *get("emit_matrices")) if "emit_matrices" in raw else False,
        domain_consts=tuple(consts),
        interface=interface,
        lines=where,
    )


def read_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {str(path)!r}: {exc.strerror or exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# writers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, columns, rows) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in r) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc


def write_energy_csv(path, reports) -> None:
    from .analysis import ENERGY_COLUMNS
    write_csv(path, ENERGY_COLUMNS, [r.row() for r in reports])


def write_convergence_csv(path, table) -> None:
    write_csv(path, table.columns, table.as_rows())


def vertex_values(space, coeffs) -> np.ndarray:
    """Values at mesh vertices of a P1/P2 function: (nv,) or (nv, 2)."""
    nv = space.mesh.n_vertices
    c = np.asarray(coeffs)
    if space.components == 1:
        return c[:nv].copy()
    return c[: 2 * nv].reshape(nv, 2).copy()


def write_vtk(mesh, fields: dict, path) -> None:
    """Legacy ASCII unstructured grid with vertex data (vectors get a zero z component)."""
    nv = mesh.n_vertices
    lines = ["# vtk DataFile Version 3.0", f"{mesh.subdomain_id} fields", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if fields:
        lines.append(f"POINT_DATA {nv}")
    for name, vals in fields.items():
        v = np.asarray(vals, dtype=float)
        if v.shape == (nv, 2):
            lines.append(f"VECTORS {name} double")
            lines += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in v]
        elif v.shape == (nv,):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(a) for a in v]
        else:
            raise IoError(f"field {name!r} has shape {v.shape}, expected ({nv},) or ({nv}, 2)")
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc


def write_matrix_market(path, matrix) -> None:
    try:
        scipy.io.mmwrite(str(path), matrix, symmetry="general", precision=17)
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc
