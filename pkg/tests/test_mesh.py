import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokes_biot.errors import InvalidRect, NonMatching, NotOnLine, OrientationError, ZeroCells
from stokes_biot.mesh import (DIRICHLET_F, DIRICHLET_P, DIRICHLET_S, FLUID, INTERFACE, NEUMANN_F,
                              NEUMANN_P, NEUMANN_S, PORO, build_rect_mesh, extract_interface,
                              stacked_rects, two_squares)

FLUID_TAGS = {"bottom": NEUMANN_F, "right": DIRICHLET_F, "top": INTERFACE, "left": DIRICHLET_F}
PORO_TAGS = {"bottom": INTERFACE, "right": (NEUMANN_S, NEUMANN_P),
             "top": (DIRICHLET_S, DIRICHLET_P), "left": (NEUMANN_P, NEUMANN_S)}


def test_single_cell_counts():
    mf, mp, it = two_squares(1)
    assert mf.n_vertices == 4 and mf.n_triangles == 2
    assert len(mf.edges) == 5
    assert it.n_segments == 1
    np.testing.assert_array_equal(it.nodes, [[0.0, 1.0], [1.0, 1.0]])


def test_normals_and_tangent():
    _, _, it = two_squares(3)
    np.testing.assert_array_equal(it.n_f, [0.0, 1.0])
    np.testing.assert_array_equal(it.n_p, [0.0, -1.0])
    np.testing.assert_array_equal(it.tau, [1.0, 0.0])
    assert it.length == pytest.approx(1.0)


def test_normals_flip_when_fluid_is_above():
    _, _, it = stacked_rects((0, 1, 1, 2), (0, 0, 1, 1), 2, 2, 2, 2,
                             fluid_dirichlet=("left", "right"), disp_dirichlet=("bottom",),
                             pres_dirichlet=("bottom",))
    np.testing.assert_array_equal(it.n_f, [0.0, -1.0])
    np.testing.assert_array_equal(it.n_p, [0.0, 1.0])


def test_criss_cross_diagonal_and_orientation():
    m = build_rect_mesh((0, 0, 1, 1), 1, 1, FLUID, FLUID_TAGS)
    np.testing.assert_array_equal(m.triangles, [[0, 1, 3], [0, 3, 2]])
    assert np.all(m.areas() > 0)


def test_boundary_tags():
    m = build_rect_mesh((0, 0, 1, 1), 3, 2, FLUID, FLUID_TAGS)
    assert len(m.edges_with_tag(INTERFACE)) == 3
    assert len(m.edges_with_tag(DIRICHLET_F)) == 4
    p = build_rect_mesh((0, 1, 1, 2), 2, 2, PORO, PORO_TAGS)
    # pressure tag given first on the left is normalised to (disp, pres)
    assert all(t[0] in (NEUMANN_S, DIRICHLET_S) for t in p.boundary_edges.values() if len(t) == 2)


def test_errors():
    with pytest.raises(ZeroCells):
        build_rect_mesh((0, 0, 1, 1), 0, 1, FLUID, FLUID_TAGS)
    with pytest.raises(InvalidRect):
        build_rect_mesh((0, 0, 0, 1), 1, 1, FLUID, FLUID_TAGS)
    with pytest.raises(NonMatching):
        stacked_rects((0, 0, 1, 1), (0, 1, 1, 2), 2, 2, 3, 3)
    with pytest.raises(NonMatching):
        stacked_rects((0, 0, 1, 1), (0.5, 1, 1.5, 2), 2, 2, 2, 2)
    mf, mp, _ = two_squares(2)
    with pytest.raises(NotOnLine):
        extract_interface(mf, mp, ((0, 0), (1, 1)))


def test_same_side_is_rejected():
    mf = build_rect_mesh((0, 0, 1, 1), 2, 2, FLUID, FLUID_TAGS)
    tags = dict(PORO_TAGS, bottom=(NEUMANN_S, NEUMANN_P), top=INTERFACE)
    mp = build_rect_mesh((0, 0, 1, 1), 2, 2, PORO, tags)
    with pytest.raises(OrientationError):
        extract_interface(mf, mp, ((0, 1), (1, 1)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.floats(0.1, 5), st.floats(0.1, 5))
def test_mesh_invariants(nx, ny, w, h):
    m = build_rect_mesh((0, 0, w, h), nx, ny, FLUID, FLUID_TAGS)
    assert m.n_triangles == 2 * nx * ny
    assert m.areas().sum() == pytest.approx(w * h)
    assert m.n_vertices - len(m.edges) + m.n_triangles == 1
    assert len(m.boundary_edges) == 2 * (nx + ny)
    # every edge is shared by one (boundary) or two (interior) triangles
    counts = np.bincount(m.triangle_edges.ravel(), minlength=len(m.edges))
    assert set(counts) <= {1, 2}
    assert int((counts == 1).sum()) == len(m.boundary_edges)
