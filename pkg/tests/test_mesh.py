from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpfeec.mesh import (HierComplex, StateError, freudenthal_children_labels, kuhn_children, label_bary,
                         midpoint, normalize_label, root_label, simplex_volume)
from hpfeec.meshes import two_triangles, unit_square, unit_tetrahedron


def exact_volume(labels, n):
    frame = tuple(range(n + 1))
    # reference simplex coordinates: drop the first barycentric coordinate
    pts = [label_bary(lab, frame)[1:] for lab in labels]
    return simplex_volume(pts)


def test_midpoint_labels():
    a, b = root_label(0), root_label(3)
    m = midpoint(a, b)
    assert m == ((0, 3), (1, 1))
    assert midpoint(m, a) == ((0, 3), (3, 1))
    assert normalize_label([2, 1, 5], [4, 2, 0]) == ((1, 2), (1, 2))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_kuhn_child_count(d):
    assert len(kuhn_children(d)) == 2 ** d


@pytest.mark.parametrize("n", [1, 2, 3])
def test_children_have_equal_exact_volume(n):
    parent = [root_label(v) for v in range(n + 1)]
    vols = [exact_volume(c, n) for c in freudenthal_children_labels(parent)]
    total = exact_volume(parent, n)
    assert all(v == total / 2 ** n for v in vols)
    assert sum(vols) == total


def leaf_area(hc):
    return sum(abs(np.linalg.det(hc.jacobian(c))) for c in hc.leaf_cells()) / 2


def test_refining_an_edge_splits_its_star():
    hc = two_triangles()
    diag = [e for e in hc.root_keys(1) if not hc.on_boundary(e)]
    assert len(diag) == 1
    hc.refine(diag[0])
    assert hc.conformity_violations() == []
    assert len(hc.leaf_cells()) == 8
    assert leaf_area(hc) == pytest.approx(1.0)


def test_refining_a_boundary_edge_is_incomplete_elsewhere():
    hc = two_triangles()
    edge = next(e for e in hc.root_keys(1) if hc.on_boundary(e))
    hc.refine(edge)
    assert hc.conformity_violations() == []
    # the neighbour keeps its coarse cell but owns a refined face
    assert len(hc.leaf_cells()) == 5


def test_refine_errors():
    hc = two_triangles()
    c = hc.cell_key(0)
    hc.refine(c)
    with pytest.raises(StateError):
        hc.refine(c)
    with pytest.raises(StateError):
        hc.refine((5, c[1]))


def test_derefine_restores_root():
    hc = unit_square(2)
    before = hc.leaf_cells()
    hc.refine_cell_completely(hc.cell_key(3))
    assert len(hc.leaf_cells()) > len(before)
    hc.derefine(list(hc.refined))
    assert hc.leaf_cells() == before and not hc.refined


def test_copy_is_independent():
    hc = two_triangles()
    other = hc.copy()
    other.refine(other.cell_key(0))
    assert not hc.refined and other.refined


def test_orientation_and_boundary():
    hc = two_triangles()
    assert [hc.orientation(c) for c in hc.leaf_cells()] == [1, -1]
    assert all(hc.orientation(c) == np.sign(np.linalg.det(hc.jacobian(c))) for c in hc.leaf_cells())
    assert len(hc.boundary_root_facets) == 4


def test_tetrahedron_refinement_is_conforming():
    hc = unit_tetrahedron()
    hc.refine(hc.root_keys(1)[0])
    assert hc.conformity_violations() == []
    assert sum(abs(np.linalg.det(hc.jacobian(c))) for c in hc.leaf_cells()) / 6 == pytest.approx(1 / 6)


def test_local_map_is_exact():
    hc = two_triangles()
    cell = hc.cell_key(0)
    hc.refine(cell)
    kid = hc.children(cell)[0]
    jac, b = hc.local_map(kid, cell)
    det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
    assert abs(det) == Fraction(1, 4)


def test_bad_input():
    with pytest.raises(ValueError):
        HierComplex([], np.zeros((0, 2)))
    with pytest.raises(ValueError):
        HierComplex([(0, 1, 1)], np.zeros((3, 2)))


@settings(max_examples=25)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 10_000)), min_size=1, max_size=6))
def test_random_refinement_stays_conforming(steps):
    hc = unit_square(1)
    for dim, pick in steps:
        cands = [k for k in hc.leaves(dim) if k[0] < 3] if dim <= hc.n else []
        if not cands:
            continue
        hc.refine(cands[pick % len(cands)])
    assert hc.conformity_violations() == []
    assert leaf_area(hc) == pytest.approx(1.0)
    hc.derefine(list(hc.refined))
    assert not hc.refined


def test_vertex_depth_examples():
    from hpfeec.mesh import vertex_depth
    assert vertex_depth(((0, 1), (1, 1))) == 2
    assert vertex_depth(((0, 1), (3, 1))) == 3
    with pytest.raises(ValueError):
        vertex_depth(((0, 1), (2, 1)))


def test_refining_every_face_gives_complete_subdivision():
    hc = two_triangles()
    cell = hc.cell_key(0)
    for f in hc.faces_of(cell):
        if len(f[1]) > 1 and hc.exists(f) and f not in hc.refined:
            hc.refine(f)
    kids = sorted(hc.children(cell))
    assert kids == sorted((1, labs) for labs in freudenthal_children_labels(cell[1]))


def test_vertex_refinement_in_a_tetrahedron():
    hc = unit_tetrahedron()
    v = hc.entity(0, 0)
    hc.refine(v)
    assert hc.conformity_violations() == []
    # the vertex, its three edges, its three faces and the volume are refined
    assert sorted(len(k[1]) for k in hc.refined) == [1, 2, 2, 2, 3, 3, 3, 4]
    for e in hc.root_keys(1):
        assert (e in hc.refined) == (v[1][0] in e[1])
    vols = [abs(np.linalg.det(hc.jacobian(c))) / 6 for c in hc.leaf_cells()]
    assert len(vols) == 8 and np.allclose(vols, 1 / 48)


def test_derefinement_waits_for_refined_faces():
    hc = two_triangles()
    diag = next(e for e in hc.root_keys(1) if not hc.on_boundary(e))
    hc.refine(diag)
    inner = [k for c in hc.refined if len(c[1]) == 3 for k in hc.pieces(c)]
    # the refined diagonal keeps both triangles refined
    assert hc.derefine(inner) == 0
    assert hc.derefine(inner + hc.pieces(diag)) > 0
    assert not hc.refined and hc.conformity_violations() == []
