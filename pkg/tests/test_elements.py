from math import factorial

import numpy as np
import pytest

from stokes_biot.elements import (LAGRANGE, MAX_ORDER, SEGMENT, TRIANGLE, build_space, evaluate,
                                  quadrature_rule, reference_basis, tabulate)
from stokes_biot.errors import UnsupportedDegree, UnsupportedOrder
from stokes_biot.mesh import DIRICHLET_F


def exact_monomial(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("order", range(MAX_ORDER + 1))
def test_triangle_rule_exactness(order):
    q = quadrature_rule(TRIANGLE, order)
    assert q.weights.sum() == pytest.approx(0.5)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            val = q.weights @ (q.points[:, 0] ** a * q.points[:, 1] ** b)
            assert val == pytest.approx(exact_monomial(a, b), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("order", range(MAX_ORDER + 1))
def test_segment_rule_exactness(order):
    q = quadrature_rule(SEGMENT, order)
    for k in range(order + 1):
        assert q.weights @ q.points[:, 0] ** k == pytest.approx(1 / (k + 1), rel=1e-13)


def test_rule_errors():
    with pytest.raises(UnsupportedOrder):
        quadrature_rule(TRIANGLE, MAX_ORDER + 1)
    with pytest.raises(UnsupportedDegree):
        tabulate(TRIANGLE, 3, [[0.2, 0.2]])


NODES = {1: [[0, 0], [1, 0], [0, 1]],
         2: [[0, 0], [1, 0], [0, 1], [0.5, 0.5], [0, 0.5], [0.5, 0]]}


@pytest.mark.parametrize("degree", [1, 2])
def test_nodal_basis(degree):
    v, g = tabulate(TRIANGLE, degree, NODES[degree])
    np.testing.assert_allclose(v, np.eye(len(NODES[degree])), atol=1e-14)
    pts = np.random.default_rng(0).uniform(0, 0.5, (7, 2))
    v, g = tabulate(TRIANGLE, degree, pts)
    np.testing.assert_allclose(v.sum(axis=1), 1.0)
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-13)


def test_segment_p2_and_vector_basis():
    v, _ = tabulate(SEGMENT, 2, [[0.0], [1.0], [0.5]])
    np.testing.assert_allclose(v, np.eye(3), atol=1e-14)
    vals, grads = reference_basis(LAGRANGE, 1, 2, [1 / 3, 1 / 3])
    assert vals.shape == (6, 2) and grads.shape == (6, 2, 2)
    np.testing.assert_allclose(vals[0::2, 0], 1 / 3)
    np.testing.assert_allclose(vals[0::2, 1], 0.0)


def test_dof_counts(spaces2):
    s = spaces2
    # 2x2 criss-cross: 9 vertices, 16 edges
    assert s.U.ndofs == 2 * 25 and s.Qf.ndofs == 9
    assert s.X.ndofs == 50 and s.Qp.ndofs == 9
    assert s.G1.ndofs == s.G2.ndofs == 2 and s.L.ndofs == 3


def test_dirichlet_mask(spaces2):
    U = spaces2.U
    x = U.node_coords[:, 0]
    on_wall = np.isclose(x, 0) | np.isclose(x, 1)
    np.testing.assert_array_equal(U.dirichlet_mask, np.repeat(on_wall, 2))
    y = spaces2.Qp.node_coords[:, 1]
    np.testing.assert_array_equal(spaces2.Qp.dirichlet_mask, np.isclose(y, 2))


def test_interpolation_reproduces_quadratics(spaces2):
    U = spaces2.U
    f = lambda x, y: np.array([x * y + y**2, 1 - x**2])  # noqa: E731
    c = U.interpolate(f)
    pts = quadrature_rule(TRIANGLE, 4).points
    vals, grads = evaluate(U, c, pts)
    from stokes_biot.elements import map_points, triangle_geometry
    X = map_points(triangle_geometry(U.mesh), pts)
    x, y = X[..., 0], X[..., 1]
    np.testing.assert_allclose(vals[..., 0], x * y + y**2, atol=1e-13)
    np.testing.assert_allclose(vals[..., 1], 1 - x**2, atol=1e-13)
    np.testing.assert_allclose(grads[..., 0, 1], x + 2 * y, atol=1e-12)
    np.testing.assert_allclose(grads[..., 1, 0], -2 * x, atol=1e-12)


def test_p0_has_no_nodal_interpolant(spaces2):
    with pytest.raises(UnsupportedDegree):
        spaces2.G1.interpolate(lambda x, y: x)
    with pytest.raises(UnsupportedDegree):
        build_space(spaces2.mesh_f, LAGRANGE, 3, 1, {DIRICHLET_F})


def test_small_reference_values():
    v, _ = reference_basis(LAGRANGE, 1, 1, [1 / 3, 1 / 3])
    np.testing.assert_allclose(v, [1 / 3] * 3)
    v, g = reference_basis(LAGRANGE, 1, 1, [0.5], SEGMENT)
    np.testing.assert_allclose(v, [0.5, 0.5])
    np.testing.assert_allclose(g[:, 0], [-1.0, 1.0])
    q = quadrature_rule(TRIANGLE, 1)
    assert q.weights.tolist() == [0.5]
    q = quadrature_rule(SEGMENT, 3)
    assert len(q.weights) == 2 and q.weights @ q.points[:, 0] ** 3 == pytest.approx(0.25, abs=1e-15)
    q = quadrature_rule(TRIANGLE, 4)
    assert q.weights @ (q.points[:, 0] ** 2 * q.points[:, 1] ** 2) == pytest.approx(1 / 180, abs=1e-14)


def test_small_space_counts():
    from stokes_biot.mesh import FLUID, build_rect_mesh, two_squares
    tags = {s: DIRICHLET_F for s in ("bottom", "right", "top", "left")}
    m = build_rect_mesh((0, 0, 1, 1), 1, 1, FLUID, tags)
    assert build_space(m, LAGRANGE, 2, 2).ndofs == 18
    assert build_space(m, LAGRANGE, 1, 1, {DIRICHLET_F}).dirichlet_mask.all()
    _, _, it = two_squares(4)
    p0 = build_space(it, LAGRANGE, 0, 1)
    assert p0.ndofs == 4 and not p0.dirichlet_mask.any()


def test_affine_gradients_constant(spaces2):
    c = spaces2.X.interpolate(lambda x, y: np.array([2 * x - y + 1, 0.5 * x + 3 * y]))
    _, g = evaluate(spaces2.X, c, quadrature_rule(TRIANGLE, 2).points)
    np.testing.assert_allclose(g, np.broadcast_to([[2.0, -1.0], [0.5, 3.0]], g.shape), atol=1e-12)
