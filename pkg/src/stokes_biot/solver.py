"""Sparse LU factorization and dense generalized symmetric eigenproblems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NotSPD, Singular

PIVOT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Factorization:
    lu: spla.SuperLU
    n: int


def factorize(matrix) -> Factorization:
    """Pivoted sparse LU; raises Singular when a pivot is below 1e-14 times the largest row norm."""
    A = sp.csc_matrix(matrix, dtype=float)
    n, m = A.shape
    if n != m:
        raise DimensionMismatch(f"matrix is {n}x{m}, not square")
    scale = float(np.sqrt(A.multiply(A).sum(axis=1).max())) if n else 0.0
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise Singular(str(exc)) from exc
    pivots = np.abs(lu.U.diagonal())
    if n and (scale == 0.0 or pivots.min() < PIVOT_TOL * scale):
        raise Singular(f"smallest pivot {pivots.min():.3e} vs row-norm scale {scale:.3e}")
    return Factorization(lu, n)


def solve(fact: Factorization, rhs) -> np.ndarray:
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != fact.n:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, factorization has {fact.n}")
    return fact.lu.solve(b)


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


def gen_eigvals(A, B) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of A x = theta B x, ascending, for symmetric A and SPD B."""
    A, B = _dense(A), _dense(B)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"shapes {A.shape} and {B.shape} do not match")
    try:
        return sla.eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
    except np.linalg.LinAlgError as exc:
        raise NotSPD(str(exc)) from exc


def gen_eig_extreme(A, B, which: str = "smallest") -> tuple[float, np.ndarray]:
    if which not in ("smallest", "largest"):
        raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")
    w, V = gen_eigvals(A, B)
    k = 0 if which == "smallest" else -1
    return float(w[k]), V[:, k]
