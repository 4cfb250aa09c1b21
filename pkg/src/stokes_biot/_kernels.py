"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``STOKES_BIOT_DISABLE_NUMBA=1`` to force the numpy paths. Both variants are
always importable as ``*_numba`` / ``*_numpy`` so they can be compared.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("STOKES_BIOT_DISABLE_NUMBA", "") not in ("1", "true", "yes")


def _jit(fn):
    return njit(cache=True)(fn) if HAVE_NUMBA else fn


# ---------------------------------------------------------------------------
# Slobodeckij seminorm Gram for continuous P1 on a 1D partition
#
# far pairs: tensor Gauss on I x J; adjacent pairs: Duffy split at the shared
# vertex, after which the integrand only depends on one variable v and the
# radial factor integrates to 1/2; self pairs are exact.

def _slobodeckij_py(s, xg, wg, vg, vw):
    n = len(s) - 1
    S = np.zeros((n + 1, n + 1))
    for i in range(n):
        S[i, i] += 1.0
        S[i + 1, i + 1] += 1.0
        S[i, i + 1] -= 1.0
        S[i + 1, i] -= 1.0
    q = np.zeros(4)
    idx = np.zeros(4, dtype=np.int64)
    for i in range(n - 1):
        # adjacent pair (i, i+1) sharing node c = i+1
        h1 = s[i + 1] - s[i]
        h2 = s[i + 2] - s[i + 1]
        idx[0], idx[1], idx[2] = i, i + 1, i + 2
        for k in range(len(vg)):
            v = vg[k]
            # xi >= eta: d = (1, v-1, -v), r = h1 + h2 v
            r = h1 + h2 * v
            q[0], q[1], q[2] = 1.0 / r, (v - 1.0) / r, -v / r
            w = 2.0 * 0.5 * vw[k] * h1 * h2
            for a in range(3):
                for b in range(3):
                    S[idx[a], idx[b]] += w * q[a] * q[b]
            # eta >= xi: d = (v, 1-v, -1), r = h1 v + h2
            r = h1 * v + h2
            q[0], q[1], q[2] = v / r, (1.0 - v) / r, -1.0 / r
            for a in range(3):
                for b in range(3):
                    S[idx[a], idx[b]] += w * q[a] * q[b]
    for i in range(n):
        for j in range(i + 2, n):
            idx[0], idx[1], idx[2], idx[3] = i, i + 1, j, j + 1
            hx = s[i + 1] - s[i]
            hy = s[j + 1] - s[j]
            for a_ in range(len(xg)):
                xi = xg[a_]
                x = s[i] + hx * xi
                for b_ in range(len(xg)):
                    eta = xg[b_]
                    y = s[j] + hy * eta
                    inv = 1.0 / (x - y)
                    q[0] = (1.0 - xi) * inv
                    q[1] = xi * inv
                    q[2] = -(1.0 - eta) * inv
                    q[3] = -eta * inv
                    w = 2.0 * wg[a_] * wg[b_] * hx * hy
                    for a in range(4):
                        for b in range(4):
                            S[idx[a], idx[b]] += w * q[a] * q[b]
    return S


slobodeckij_gram_numba = _jit(_slobodeckij_py)


def slobodeckij_gram_numpy(s, xg, wg, vg, vw):
    s = np.asarray(s, dtype=float)
    n = len(s) - 1
    S = np.zeros((n + 1, n + 1))
    k = np.arange(n)
    np.add.at(S, (k, k), 1.0)
    np.add.at(S, (k + 1, k + 1), 1.0)
    np.add.at(S, (k, k + 1), -1.0)
    np.add.at(S, (k + 1, k), -1.0)
    if n >= 2:
        h1 = np.diff(s)[:-1, None]
        h2 = np.diff(s)[1:, None]
        v = vg[None, :]
        w = vw[None, :] * h1 * h2
        r1 = h1 + h2 * v
        r2 = h1 * v + h2
        q1 = np.stack([1 / r1, (v - 1) / r1, -v / r1], axis=2)
        q2 = np.stack([v / r2, (1 - v) / r2, -1 / r2], axis=2)
        blocks = (np.einsum("iv,iva,ivb->iab", w, q1, q1)
                  + np.einsum("iv,iva,ivb->iab", w, q2, q2))
        nodes = np.arange(n - 1)[:, None] + np.arange(3)
        np.add.at(S, (nodes[:, :, None], nodes[:, None, :]), blocks)
    if n >= 3:
        I, J = np.triu_indices(n, 2)
        hx = (s[I + 1] - s[I])[:, None, None]
        hy = (s[J + 1] - s[J])[:, None, None]
        xi = xg[None, :, None]
        eta = xg[None, None, :]
        inv = 1.0 / ((s[I][:, None, None] + hx * xi) - (s[J][:, None, None] + hy * eta))
        q = np.stack([(1 - xi) * inv, xi * inv, -(1 - eta) * inv, -eta * inv], axis=3)
        w = 2.0 * np.outer(wg, wg)[None] * hx * hy
        blocks = np.einsum("pab,pabi,pabj->pij", w, q, q)
        nodes = np.stack([I, I + 1, J, J + 1], axis=1)
        np.add.at(S, (nodes[:, :, None], nodes[:, None, :]), blocks)
    return S


# ---------------------------------------------------------------------------
# dense Gaussian elimination with partial pivoting (oracle path)

def _gauss_py(A, B, rel_tol):
    A = A.copy()
    B = B.copy()
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        r = 0.0
        for j in range(n):
            r += A[i, j] * A[i, j]
        if r > scale:
            scale = r
    scale = np.sqrt(scale)
    for k in range(n):
        p = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            if abs(A[i, k]) > best:
                best = abs(A[i, k])
                p = i
        if best <= rel_tol * scale:
            return B, False
        if p != k:
            for j in range(n):
                A[k, j], A[p, j] = A[p, j], A[k, j]
            for j in range(B.shape[1]):
                B[k, j], B[p, j] = B[p, j], B[k, j]
        piv = A[k, k]
        for i in range(k + 1, n):
            f = A[i, k] / piv
            if f != 0.0:
                A[i, k] = 0.0
                for j in range(k + 1, n):
                    A[i, j] -= f * A[k, j]
                for j in range(B.shape[1]):
                    B[i, j] -= f * B[k, j]
    for k in range(n - 1, -1, -1):
        for j in range(B.shape[1]):
            acc = B[k, j]
            for m in range(k + 1, n):
                acc -= A[k, m] * B[m, j]
            B[k, j] = acc / A[k, k]
    return B, True


gauss_solve_numba = _jit(_gauss_py)


def gauss_solve_numpy(A, B, rel_tol):
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    n = A.shape[0]
    scale = np.sqrt((A * A).sum(axis=1).max()) if n else 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= rel_tol * scale:
            return B, False
        if p != k:
            A[[k, p]] = A[[p, k]]
            B[[k, p]] = B[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        B[k + 1:] -= np.outer(f, B[k])
    for k in range(n - 1, -1, -1):
        B[k] = (B[k] - A[k, k + 1:] @ B[k + 1:]) / A[k, k]
    return B, True


if USE_NUMBA:
    slobodeckij_gram = slobodeckij_gram_numba
    gauss_solve = gauss_solve_numba
else:
    slobodeckij_gram = slobodeckij_gram_numpy
    gauss_solve = gauss_solve_numpy
