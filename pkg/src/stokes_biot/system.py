"""Monolithic saddle point system and the norm Gram matrices of M and Z."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .elements import Spaces
from .errors import DimensionMismatch, NonPositiveParam, SingularBlock, SpaceMismatch
from .forms import (PhysicalParams, assemble_h_half_gram, assemble_interface_form,
                    assemble_volume_form, mass_matrix, stiffness_matrix, strain_matrix)
from .mesh import FLUID, PORO

M_FIELDS = ("U", "X", "Qp", "G2", "L")
Z_FIELDS = ("Qf", "G1")
RESIDUAL_BLOCKS = ("momentum_f", "mass_f", "momentum_s", "pressure_p", "lm_g2", "lm_lambda",
                   "constraint")


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Assembled blocks with Dirichlet DOFs eliminated.

    ``blocks`` keeps the raw (uneliminated) form matrices, ``S`` the H^1/2
    Gram on the lambda space and ``R`` the G1 x L pairing.
    """

    spaces: Spaces
    params: PhysicalParams
    dt: float
    A_M: sp.csr_matrix
    B_MZ: sp.csr_matrix
    G_M: sp.csr_matrix
    G_Z: np.ndarray
    S: sp.csr_matrix
    R: sp.csr_matrix
    blocks: dict
    offsets: dict
    dirichlet_M: np.ndarray

    @property
    def n_M(self) -> int:
        return self.A_M.shape[0]

    @property
    def n_Z(self) -> int:
        return self.B_MZ.shape[0]

    @property
    def free_M(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_M)

    def split(self, x) -> dict:
        """Field name -> slice of a full (M then Z) vector."""
        x = np.asarray(x)
        if len(x) != self.n_M + self.n_Z:
            raise DimensionMismatch(f"vector has {len(x)} entries, system has {self.n_M + self.n_Z}")
        return {name: x[a:b] for name, (a, b) in self.offsets.items()}


def _offsets(spaces: Spaces):
    out, k = {}, 0
    for name in M_FIELDS + Z_FIELDS:
        n = getattr(spaces, name).ndofs
        out[name] = (k, k + n)
        k += n
    return out


def eliminate(A, mask_rows, mask_cols=None, unit_diag=True):
    """Zero masked rows and columns; put 1 on the diagonal of square masked DOFs."""
    mask_cols = mask_rows if mask_cols is None else mask_cols
    Dr = sp.diags((~mask_rows).astype(float))
    Dc = sp.diags((~mask_cols).astype(float))
    out = Dr @ sp.csr_matrix(A) @ Dc
    if unit_diag:
        out = out + sp.diags(mask_rows.astype(float))
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    return out


def _check_spd(name, M, free):
    D = M.toarray() if sp.issparse(M) else np.asarray(M)
    D = D[np.ix_(free, free)]
    if D.size == 0:
        return
    try:
        sla.cholesky(0.5 * (D + D.T))
    except np.linalg.LinAlgError as exc:
        raise SingularBlock(f"Gram block {name} is not SPD") from exc


def norm_grams(spaces: Spaces, S, gram: str = "strain", check: bool = True):
    """Diagonal Gram blocks of M and Z.

    ``gram="strain"`` uses ||v||_0^2 + ||D(v)||_0^2 on U and X, ``gram="h1"``
    the full gradient instead.
    """
    if gram == "strain":
        KU, KX = strain_matrix(spaces.U), strain_matrix(spaces.X)
    elif gram == "h1":
        KU, KX = stiffness_matrix(spaces.U), stiffness_matrix(spaces.X)
    else:
        raise ValueError(f"unknown gram {gram!r}")
    blocks_M = {
        "U": mass_matrix(spaces.U) + KU,
        "X": mass_matrix(spaces.X) + KX,
        "Qp": mass_matrix(spaces.Qp) + stiffness_matrix(spaces.Qp),
        "G2": mass_matrix(spaces.G2),
        "L": sp.csr_matrix(S),
    }
    R = assemble_interface_form("BLM", spaces, None, 1.0)
    Sd = S.toarray() if sp.issparse(S) else np.asarray(S)
    Rd = R.toarray()
    dual = Rd @ sla.solve(Sd, Rd.T, assume_a="pos")
    blocks_Z = {"Qf": mass_matrix(spaces.Qf).toarray(), "G1": 0.5 * (dual + dual.T)}
    if check:
        for name, B in blocks_M.items():
            _check_spd(name, B, getattr(spaces, name).free_dofs)
        for name, B in blocks_Z.items():
            _check_spd(name, B, np.arange(B.shape[0]))
    return blocks_M, blocks_Z, R


def build_block_system(spaces: Spaces, params: PhysicalParams, dt: float,
                       gram: str = "strain", check_grams: bool = True) -> BlockSystem:
    if dt <= 0:
        raise NonPositiveParam(f"dt must be > 0, got {dt}")
    if not isinstance(params, PhysicalParams):
        raise TypeError("params must be PhysicalParams")
    if spaces.U.mesh.subdomain_id != FLUID or spaces.X.mesh.subdomain_id != PORO:
        raise SpaceMismatch("U must live on the fluid mesh and X on the poro mesh")
    for name in ("G1", "G2", "L"):
        if getattr(spaces, name).mesh is not spaces.iface:
            raise SpaceMismatch(f"{name} is not defined on the interface mesh")

    blk = {k: assemble_volume_form(k, spaces, params, dt) for k in ("A1", "A2", "BPP", "BPF")}
    blk.update({k: assemble_interface_form(k, spaces, params, dt)
                for k in ("AG", "BG1", "BG2", "BLM", "B2")})
    S = assemble_h_half_gram(spaces.L)
    blk["S"] = S

    nU, nX = spaces.U.ndofs, spaces.X.ndofs
    nQp, nG2, nQf, nG1 = (spaces.Qp.ndofs, spaces.G2.ndofs, spaces.Qf.ndofs, spaces.G1.ndofs)
    BPP_UX = sp.hstack([sp.csr_matrix((nQp, nU)), blk["BPP"]])
    eps = params.eps_bar
    A_M = sp.bmat([
        [blk["A1"], BPP_UX.T, blk["BG2"].T, None],
        [-BPP_UX, blk["A2"], None, -blk["B2"].T],
        [-blk["BG2"], None, blk["AG"], None],
        [None, blk["B2"], None, eps * S],
    ], format="csr")
    BPF_UX = sp.hstack([blk["BPF"], sp.csr_matrix((nQf, nX))])
    nL = spaces.L.ndofs
    B_MZ = sp.vstack([
        sp.hstack([BPF_UX, sp.csr_matrix((nQf, nQp + nG2 + nL))]),
        sp.hstack([blk["BG1"], sp.csr_matrix((nG1, nQp + nG2)), blk["BLM"]]),
    ], format="csr")

    mask = np.concatenate([spaces.U.dirichlet_mask, spaces.X.dirichlet_mask,
                           spaces.Qp.dirichlet_mask, np.zeros(nG2, bool),
                           np.zeros(spaces.L.ndofs, bool)])
    A_M = eliminate(A_M, mask)
    B_MZ = eliminate(B_MZ, np.zeros(B_MZ.shape[0], bool), mask, unit_diag=False)

    gM, gZ, R = norm_grams(spaces, S, gram, check_grams)
    G_M = eliminate(sp.block_diag([gM[k] for k in M_FIELDS], format="csr"), mask)
    G_Z = sla.block_diag(*[gZ[k] for k in Z_FIELDS])
    return BlockSystem(spaces, params, float(dt), A_M, B_MZ, G_M, G_Z, sp.csr_matrix(S), R,
                       blk, _offsets(spaces), mask)


def full_matrix(system: BlockSystem) -> sp.csr_matrix:
    """[[A_M, B_MZ^T], [B_MZ, 0]]."""
    return sp.bmat([[system.A_M, system.B_MZ.T], [system.B_MZ, None]], format="csr")


def build_rhs(system: BlockSystem, F1, F2, F3, F4, FL=None) -> np.ndarray:
    """Stack loads as [F1, F2, F4, F_L, 0_Qf, -F3] with Dirichlet entries zeroed."""
    nL = system.spaces.L.ndofs
    FL = np.zeros(nL) if FL is None else FL
    FM = np.concatenate([F1, F2, F4, FL])
    FM[system.dirichlet_M] = 0.0
    FZ = np.concatenate([np.zeros(system.spaces.Qf.ndofs), -np.asarray(F3)])
    return np.concatenate([FM, FZ])


def residual(system: BlockSystem, x, rhs) -> dict:
    """Euclidean norm of the algebraic residual in each equation block."""
    K = full_matrix(system)
    x = np.asarray(x, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if x.shape != (K.shape[0],) or rhs.shape != (K.shape[0],):
        raise DimensionMismatch(f"expected vectors of length {K.shape[0]}")
    r = K @ x - rhs
    o = system.offsets
    rows = {"momentum_f": "U", "mass_f": "Qf", "momentum_s": "X", "pressure_p": "Qp",
            "lm_g2": "G2", "lm_lambda": "L", "constraint": "G1"}
    return {k: float(np.linalg.norm(r[o[f][0]:o[f][1]])) for k, f in rows.items()}
