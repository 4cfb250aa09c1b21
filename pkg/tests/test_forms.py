import numpy as np
import pytest
import scipy.sparse as sp
from scipy.integrate import dblquad

from stokes_biot.errors import MissingHistory, NonPositiveParam, SpaceMismatch
from stokes_biot.forms import (History, LoadData, PhysicalParams, assemble_h_half_gram,
                               assemble_interface_form, assemble_load, assemble_volume_form,
                               div_div_matrix, div_pairing, interface_mass,
                               interface_trace_pairing, mass_matrix, neumann_load,
                               slobodeckij_matrix, slobodeckij_seminorm_sq, stiffness_matrix,
                               strain_matrix, volume_load)
from stokes_biot.mesh import NEUMANN_F

from conftest import spaces_for


def vec(space, f):
    return space.interpolate(f)


def test_mass_totals(spaces2):
    s = spaces2
    for space in (s.Qf, s.Qp):
        one = np.ones(space.ndofs)
        assert one @ mass_matrix(space) @ one == pytest.approx(1.0)
    one = np.ones(s.U.ndofs)
    assert one @ mass_matrix(s.U) @ one == pytest.approx(2.0)
    assert np.ones(2) @ mass_matrix(s.G2) @ np.ones(2) == pytest.approx(1.0)


def test_stiffness_and_strain_kernels(spaces2):
    U = spaces2.U
    K, D = stiffness_matrix(U), strain_matrix(U)
    const = vec(U, lambda x, y: np.array([1.0 + 0 * x, 2.0 + 0 * x]))
    rot = vec(U, lambda x, y: np.array([-y, x]))
    assert np.abs(K @ const).max() < 1e-12
    assert np.abs(D @ rot).max() < 1e-12
    shear = vec(U, lambda x, y: np.array([y, 0 * x]))
    # |grad|^2 = 1, |D|^2 = 2 * (1/2)^2
    assert shear @ K @ shear == pytest.approx(1.0)
    assert shear @ D @ shear == pytest.approx(0.5)


def test_div_forms(spaces2):
    s = spaces2
    u = vec(s.X, lambda x, y: np.array([x, 0 * y]))
    assert u @ div_div_matrix(s.X) @ u == pytest.approx(1.0)
    q = np.ones(s.Qp.ndofs)
    assert q @ div_pairing(s.X, s.Qp, 3.0) @ u == pytest.approx(3.0)


def test_volume_form_signs(spaces2):
    p = PhysicalParams(alpha=2.0)
    s = spaces2
    BPP = assemble_volume_form("BPP", s, p, 0.1)
    u = vec(s.X, lambda x, y: np.array([x, 0 * y]))
    assert np.ones(s.Qp.ndofs) @ BPP @ u == pytest.approx(-2.0)
    BPF = assemble_volume_form("BPF", s, p, 0.1)
    uf = vec(s.U, lambda x, y: np.array([0 * x, y]))
    assert np.ones(s.Qf.ndofs) @ BPF @ uf == pytest.approx(-1.0)
    A2 = assemble_volume_form("A2", s, p, 0.1)
    assert np.allclose((A2 - A2.T).toarray(), 0)


def test_interface_pairings(spaces2):
    s = spaces2
    it = s.iface
    up = vec(s.U, lambda x, y: np.array([0 * x, 1 + 0 * y]))
    np.testing.assert_allclose(interface_trace_pairing(s.G1, s.U, it.n_f) @ up, it.h)
    np.testing.assert_allclose(interface_trace_pairing(s.G1, s.U, it.tau) @ up, 0, atol=1e-15)
    xp = vec(s.X, lambda x, y: np.array([x, 0 * y]))
    # integral of x over each half of [0, 1]
    np.testing.assert_allclose(interface_trace_pairing(s.G2, s.X, it.tau) @ xp, [0.125, 0.375])
    R = interface_mass(s.G1, s.L)
    assert R.sum() == pytest.approx(1.0)
    BG1 = assemble_interface_form("BG1", s, PhysicalParams(), 0.1)
    assert BG1.shape == (s.G1.ndofs, s.U.ndofs + s.X.ndofs)


def test_lambda_gram_needs_p1_interface(spaces2):
    with pytest.raises(SpaceMismatch):
        assemble_h_half_gram(spaces2.G1)


def test_seminorm_of_constant_is_zero():
    s = np.linspace(0, 1, 9)
    assert slobodeckij_seminorm_sq(s, np.full(9, 3.7)) == 0.0
    S = slobodeckij_matrix(s)
    assert np.abs(S @ np.ones(9)).max() < 1e-13


@pytest.mark.parametrize("n", [1, 2, 5, 16])
def test_seminorm_of_arclength_is_one(n):
    s = np.linspace(0, 1, n + 1)
    assert slobodeckij_seminorm_sq(s, s) == pytest.approx(1.0, abs=1e-12)
    assert s @ slobodeckij_matrix(s) @ s == pytest.approx(1.0, abs=1e-12)


def _dblquad_seminorm(s, u):
    """Reference by adaptive quadrature over every element pair."""
    total = 0.0
    for i in range(len(s) - 1):
        si = (u[i + 1] - u[i]) / (s[i + 1] - s[i])
        total += si**2 * (s[i + 1] - s[i]) ** 2
        for j in range(len(s) - 1):
            if i == j:
                continue
            def f(y, x, i=i, j=j):
                ux = np.interp(x, s, u)
                uy = np.interp(y, s, u)
                return (ux - uy) ** 2 / (x - y) ** 2
            val, _ = dblquad(f, s[i], s[i + 1], s[j], s[j + 1], epsabs=1e-13, epsrel=1e-11)
            total += val
    return total


@pytest.mark.parametrize("s,u", [
    (np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0, 0.0])),
    (np.array([0.0, 0.3, 0.45, 1.0]), np.array([0.2, -1.0, 0.5, 2.0])),
])
def test_seminorm_against_adaptive_quadrature(s, u):
    ref = _dblquad_seminorm(s, u)
    assert u @ slobodeckij_matrix(s) @ u == pytest.approx(ref, rel=1e-7)
    assert slobodeckij_seminorm_sq(s, u) == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_h_half_gram_spd(n):
    S = assemble_h_half_gram(spaces_for(n).L).toarray()
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S).min() > 0


def test_params_validation():
    with pytest.raises(NonPositiveParam):
        PhysicalParams(kappa=-1.0)
    with pytest.raises(NonPositiveParam):
        PhysicalParams(nu_f=np.inf)
    with pytest.raises(NonPositiveParam):
        PhysicalParams(eps_bar=0.0)
    assert PhysicalParams(eps_bar=0.0, eps_bar_zero_override=True).eps_bar == 0.0


def test_loads(spaces2):
    s = spaces2
    assert volume_load(s.Qf, lambda x, y: 1 + 0 * x).sum() == pytest.approx(1.0)
    g = neumann_load(s.U, NEUMANN_F, lambda x, y, nx, ny: np.array([nx, ny]))
    # bottom side only, outward normal (0, -1)
    assert g[1::2].sum() == pytest.approx(-1.0)
    assert g[0::2].sum() == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(MissingHistory):
        assemble_load("F1", s, LoadData(), History(), PhysicalParams(), 0.1)
    with pytest.raises(MissingHistory):
        assemble_load("F2", s, LoadData(), None, PhysicalParams(), 0.1)


def test_form_examples(spaces2):
    s = spaces2
    c = vec(s.U, lambda x, y: np.array([2.0 + 0 * x, -1.0 + 0 * x]))
    A1 = assemble_volume_form("A1", s, PhysicalParams(rho_f=3.0), 0.1)
    full = np.concatenate([c, np.zeros(s.X.ndofs)])
    assert full @ A1 @ full == pytest.approx(3.0 * 5.0)
    A2 = assemble_volume_form("A2", s, PhysicalParams(s0=2.0), 0.5)
    one = np.ones(s.Qp.ndofs)
    assert one @ A2 @ one == pytest.approx(8.0)
    BLM = assemble_interface_form("BLM", s, None, 1.0)
    assert np.ones(2) @ BLM @ np.ones(3) == pytest.approx(1.0)
    BG1 = assemble_interface_form("BG1", s, PhysicalParams(), 0.1)
    nf = vec(s.U, lambda x, y: np.array([0 * x, 1 + 0 * x]))
    assert np.ones(2) @ BG1 @ np.concatenate([nf, np.zeros(s.X.ndofs)]) == pytest.approx(-1.0)
    BG2 = assemble_interface_form("BG2", s, PhysicalParams(), 0.1)
    tu = vec(s.U, lambda x, y: np.array([1 + 0 * x, 0 * x]))
    tx = vec(s.X, lambda x, y: np.array([1 + 0 * x, 0 * x]))
    assert np.ones(2) @ BG2 @ np.concatenate([tu, tx]) == pytest.approx(0.0, abs=1e-15)


def test_bg1_against_direct_quadrature(spaces2):
    s = spaces2
    rng = np.random.default_rng(4)
    v, phi, s1 = rng.normal(size=s.U.ndofs), rng.normal(size=s.X.ndofs), rng.normal(size=2)
    BG1 = assemble_interface_form("BG1", s, PhysicalParams(), 0.1)
    got = s1 @ BG1 @ np.concatenate([v, phi])

    def trace(space, coeffs, x):
        # P2 trace on y = 1 via the element containing the point
        from stokes_biot.elements import tabulate
        m = space.mesh
        for t, tri in enumerate(m.triangles):
            P = m.vertices[tri]
            J = np.column_stack([P[1] - P[0], P[2] - P[0]])
            xi = np.linalg.solve(J, np.array([x, 1.0]) - P[0])
            if xi.min() > -1e-12 and xi.sum() < 1 + 1e-12:
                vals, _ = tabulate("triangle", 2, xi[None, :])
                loc = coeffs[2 * space.cell_nodes[t][:, None] + np.arange(2)]
                return vals[0] @ loc
        raise AssertionError("point not found")

    xg, wg = np.polynomial.legendre.leggauss(6)
    ref = 0.0
    for k, (a, b) in enumerate([(0.0, 0.5), (0.5, 1.0)]):
        for xq, wq in zip(xg, wg):
            x = a + (b - a) * (xq + 1) / 2
            w = (b - a) / 2 * wq
            ref -= w * s1[k] * (trace(s.X, phi, x) @ [0, -1] + trace(s.U, v, x) @ [0, 1])
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_gram_examples():
    sp_ = spaces_for(1)
    S = assemble_h_half_gram(sp_.L).toarray()
    one = np.ones(2)
    assert one @ S @ one == pytest.approx(1.0)
    x = np.array([0.0, 1.0])
    assert x @ S @ x == pytest.approx(4 / 3)


def test_hat_on_four_segments():
    s = np.linspace(0, 1, 5)
    u = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    assert u @ slobodeckij_matrix(s) @ u == pytest.approx(_dblquad_seminorm(s, u), rel=1e-6)


def test_load_examples(spaces2):
    s = spaces2
    p = PhysicalParams()
    z = History(u=np.zeros(s.U.ndofs), eta_hat=np.zeros(s.X.ndofs),
                eta_hat_prev=np.zeros(s.X.ndofs), pp_hat=np.zeros(s.Qp.ndofs))
    for k in ("F1", "F2", "F3", "F4"):
        assert not np.any(assemble_load(k, s, LoadData(), z, p, 0.1))
    h = History(eta_hat=vec(s.X, lambda x, y: np.array([0 * x, -1 + 0 * x])))
    assert assemble_load("F3", s, LoadData(), h, p, 0.1).sum() == pytest.approx(1.0)
    F1 = assemble_load("F1", s, LoadData(f_f=lambda x, y: np.array([1 + 0 * x, 0 * x])), z, p, 0.1)
    fu = F1[:s.U.ndofs]
    # oracle: dt * integral of each basis function by a separate rule
    from stokes_biot.elements import quadrature_rule, tabulate, triangle_geometry
    q = quadrature_rule("triangle", 2)
    vals, _ = tabulate("triangle", 2, q.points)
    det = triangle_geometry(s.U.mesh).det
    ref = np.zeros(s.U.n_nodes)
    for t in range(s.U.mesh.n_triangles):
        ref[s.U.cell_nodes[t]] += abs(det[t]) * (q.weights @ vals)
    np.testing.assert_allclose(fu[0::2], 0.1 * ref, atol=1e-15)
    np.testing.assert_allclose(fu[1::2], 0.0)


def test_a_blocks_spd_after_elimination(spaces2):
    p = PhysicalParams()
    for k, space in (("A1", None), ("A2", spaces2.Qp)):
        A = assemble_volume_form(k, spaces2, p, 0.1).toarray()
        assert np.abs(A - A.T).max() <= 1e-13 * np.abs(A).max()
        if space is None:
            free = np.flatnonzero(~np.concatenate([spaces2.U.dirichlet_mask, spaces2.X.dirichlet_mask]))
        else:
            free = space.free_dofs
        assert np.linalg.eigvalsh(A[np.ix_(free, free)]).min() > 0
