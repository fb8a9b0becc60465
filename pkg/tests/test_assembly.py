from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpfeec.assembly import (FULL, HIERARCHICAL, MINUS, QUASI, Space, assemble, cell_whitney_expansion,
                             coarse_whitney, element_matrix, evaluate_field, l2_error, l2_projection,
                             load_integrand, locate, mass_integrand, refinement_constraints, resolve_orders,
                             trace_dofs)
from hpfeec.meshes import interval, two_triangles, unit_square
from hpfeec.polyform import AffineMap, PolyForm, Polynomial, pullback

REF_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_linear_mass_matrix_on_reference_triangle():
    m = element_matrix(REF_TRIANGLE, 0, 1)
    expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
    assert np.allclose(m, expected, atol=1e-15)


@given(st.floats(0.01, 100.0))
def test_mass_matrix_scales_with_area(h):
    m1 = element_matrix(REF_TRIANGLE, 0, 2)
    mh = element_matrix(REF_TRIANGLE * h, 0, 2)
    assert np.allclose(mh, m1 * h * h, rtol=1e-12)


def test_one_form_stiffness_is_scale_invariant_in_the_plane():
    # |d w|^2 scales like h^-4 against an area h^2, and w like h^-1 twice
    s1 = element_matrix(REF_TRIANGLE, 0, 2, form="stiffness")
    s3 = element_matrix(REF_TRIANGLE * 3, 0, 2, form="stiffness")
    assert np.allclose(s1, s3, rtol=1e-12)


def test_minimum_rule_on_shared_edge():
    hc = two_triangles()
    c0, c1 = hc.cell_key(0), hc.cell_key(1)
    od = resolve_orders(hc, {c0: 2, c1: 4})
    shared = [f for f in hc.faces_of(c0, 1) if f in hc.faces_of(c1, 1)]
    assert od.sub_order[shared[0]] == 2
    only1 = [f for f in hc.faces_of(c1, 1) if f not in shared]
    assert all(od.sub_order[f] == 4 for f in only1)
    assert all(od.sub_order[v] == 1 for v in hc.faces_of(c1, 0))
    with pytest.raises(ValueError):
        resolve_orders(hc, 0)


def test_one_dimensional_refinement_coefficients_are_halves():
    hc = interval(1)
    cell = hc.cell_key(0)
    hc.refine(cell)
    cs = refinement_constraints(hc, cell)
    kids = hc.children(cell)
    assert sorted(cs.fine[k] for k in kids) == [Fraction(1, 2)] * 2


def test_refinement_equation_holds_on_children():
    hc = two_triangles()
    e = hc.entity(1, 2)
    hc.refine(e)
    cs = refinement_constraints(hc, e)
    for c in sorted(hc.cofaces[e]):
        whitney = coarse_whitney(hc, e, c)
        for x in hc.children(c):
            jac, b = hc.local_map(x, c)
            assert pullback(whitney, AffineMap(jac, b)) == cell_whitney_expansion(hc, cs, x)


def test_hierarchical_split_has_zero_signed_mean():
    hc = two_triangles()
    e = hc.entity(1, 2)
    hc.refine(e)
    cs = refinement_constraints(hc, e, HIERARCHICAL)
    a, rest = cs.hierarchical_split({mu: Fraction(i + 3, 7) for i, mu in enumerate(sorted(cs.signs))})
    assert sum(cs.signs[mu] * v for mu, v in rest.items()) == 0


def polynomial_field(k):
    if k == 0:
        return lambda x: (1 + x[:, 0] - 2 * x[:, 0] * x[:, 1] + x[:, 1] ** 2)[None]
    return lambda x: np.stack([x[:, 1] ** 2 - x[:, 0], 1 + x[:, 0] * x[:, 1]])


def refined_square():
    hc = unit_square(2)
    hc.refine(hc.cell_key(0))
    hc.refine(hc.children(hc.cell_key(0))[0])
    return hc


@pytest.mark.parametrize("k,family", [(0, MINUS), (1, FULL), (1, MINUS)])
@pytest.mark.parametrize("variant", [QUASI, HIERARCHICAL])
def test_projection_reproduces_polynomials_on_nonconforming_mesh(k, family, variant):
    hc = refined_square()
    order = 2 if family == FULL else 3
    space = Space(hc, resolve_orders(hc, order), k, family, variant)
    f = polynomial_field(k)
    coef = l2_projection(hc, space, f)
    assert l2_error(hc, space, coef, f) < 1e-12


def test_mixed_orders_keep_continuity():
    hc = two_triangles()
    od = resolve_orders(hc, {hc.cell_key(0): 2, hc.cell_key(1): 4})
    space = Space(hc, od, 0, MINUS)
    coef = l2_projection(hc, space, lambda x: np.sin(3 * x[:, 0] + x[:, 1])[None])
    # the shared diagonal runs from (0, 0) to (1, 1)
    t = np.linspace(0, 1, 7)
    pts = np.column_stack([t, t])
    vals = []
    for leaf in hc.leaf_cells():
        xs = hc.coords(leaf)
        ref = np.linalg.solve((xs[1:] - xs[0]).T, (pts - xs[0]).T).T
        vals.append(evaluate_field(space, coef, leaf, ref)[0])
    assert np.allclose(vals[0], vals[1], atol=1e-12)


def test_mass_matrix_is_symmetric_positive_definite():
    hc = refined_square()
    space = Space(hc, resolve_orders(hc, 2), 1, FULL)
    sysm = assemble(hc, [space], mass_integrand)
    a, _, _ = sysm.reduced()
    a = a.toarray()
    assert np.allclose(a, a.T, atol=1e-14)
    assert np.linalg.eigvalsh(a).min() > 0


def test_interior_dofs_have_no_boundary_trace():
    hc = unit_square(2)
    space = Space(hc, resolve_orders(hc, 3), 0, MINUS)
    fixed = trace_dofs(hc, space)
    assert 0 < len(fixed) < space.ndof
    coef = np.random.default_rng(1).normal(size=space.ndof)
    coef[fixed] = 0.0
    for x in ([0.0, 0.3], [0.7, 0.0], [1.0, 0.55], [0.2, 1.0]):
        leaf, ref = locate(hc, np.array(x))
        assert abs(evaluate_field(space, coef, leaf, ref[None])[0, 0]) < 1e-12


def test_locate_outside_returns_none():
    assert locate(unit_square(1), np.array([2.0, 2.0])) is None


def test_space_argument_checks():
    hc = two_triangles()
    with pytest.raises(ValueError):
        Space(hc, resolve_orders(hc, 1), 0, MINUS, variant="nodal")


def test_one_dimensional_coarse_hat_is_fine_hat_plus_half():
    from hpfeec.basis import whitney_form
    hc = interval(1)
    cell = hc.cell_key(0)
    hc.refine(cell)
    for x in hc.children(cell):
        jac, b = hc.local_map(x, cell)
        coarse = pullback(whitney_form(1, (0,)), AffineMap(jac, b))
        # the child keeps the coarse vertex at one end and the midpoint at the other
        labels = x[1]
        ends = {lab: i for i, lab in enumerate(labels)}
        at_v = ends.get(((0,), (1,)))
        mid = ends[((0, 1), (1, 1))]
        expect = whitney_form(1, (mid,)) * Fraction(1, 2)
        if at_v is not None:
            expect = expect + whitney_form(1, (at_v,))
        assert coarse == expect


def test_constraints_only_touch_children():
    hc = two_triangles()
    e = hc.entity(1, 2)
    hc.refine(e)
    cs = refinement_constraints(hc, e)
    assert set(cs.signs) == set(hc.children(e))


def test_child_order_override_and_minimum_rule():
    hc = two_triangles()
    cell = hc.cell_key(0)
    hc.refine_cell_completely(cell)
    kids = hc.children(cell)
    special = kids[0]
    req = {hc.cell_key(0): 3, hc.cell_key(1): 3, special: 5}
    od = resolve_orders(hc, req, mode="hierarchical")
    assert od.leaf_cell_order(special) in (3, 5)
    for f in hc.faces_of(special):
        if hc.exists(f) and len(f[1]) > 1:
            shared = any(f in hc.faces_of(k) for k in kids if k != special)
            assert od.sub_order[f] <= 5
            if shared:
                assert od.sub_order[f] == 3


def test_two_triangle_mass_matrix_against_direct_integration():
    hc = two_triangles()
    space = Space(hc, resolve_orders(hc, 1), 0, MINUS)
    m = assemble(hc, [space], mass_integrand).matrix().toarray()
    assert m.shape == (4, 4) and np.allclose(m, m.T)
    # direct integration of global hats (barycentric coordinates) with a dense tensor Gauss rule
    g, gw = np.polynomial.legendre.leggauss(12)
    g, gw = (g + 1) / 2, gw / 2
    pts = np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]])
    direct = np.zeros((4, 4))
    for tri in ((0, 1, 3), (0, 3, 2)):
        x = pts[list(tri)]
        jac = (x[1:] - x[0]).T
        for a, wa in zip(g, gw):
            for bb, wb in zip(g, gw):
                s, t = a, bb * (1 - a)  # collapsed square to triangle
                bary = np.array([1 - s - t, s, t])
                w = wa * wb * (1 - a) * abs(np.linalg.det(jac))
                full = np.zeros(4)
                full[list(tri)] = bary
                direct += w * np.outer(full, full)
    # match dofs to vertices through their keys
    order = [space.dofs_of(hc.entity(0, v))[0] for v in range(4)]
    assert np.allclose(m[np.ix_(order, order)], direct, atol=1e-14)


def test_refined_edge_reproduces_constants():
    hc = two_triangles()
    hc.refine(hc.entity(1, 2))
    space = Space(hc, resolve_orders(hc, 1), 0, MINUS)
    sysm = assemble(hc, [space], load_integrand(lambda x: np.ones((1, len(x))), 0))
    a, b, p = sysm.reduced()
    assert a.shape[0] == space.nfree
    coef = l2_projection(hc, space, lambda x: np.ones((1, len(x))))
    assert l2_error(hc, space, coef, lambda x: np.ones((1, len(x)))) < 1e-13


def test_orientation_sign_of_pulled_back_volume():
    hc = two_triangles()
    for c in hc.leaf_cells():
        jac = hc.jacobian(c)
        vol = PolyForm(2, 2, {(0, 1): Polynomial.constant(2, 1)})
        pulled = pullback(vol, AffineMap([[Fraction(v).limit_denominator() for v in row] for row in jac]))
        assert np.sign(float(pulled.component((0, 1)).terms[(0, 0)])) == hc.orientation(c)


def test_eliminated_dofs_match_boundary_blocks():
    hc = unit_square(2)
    for k, fam, r in ((0, MINUS, 3), (1, FULL, 2)):
        space = Space(hc, resolve_orders(hc, r), k, fam)
        fixed = trace_dofs(hc, space)
        blocks = sum(len(space.dofs_of(f)) for f in hc.leaves() if len(f[1]) - 1 >= k and len(f[1]) <= hc.n
                     and hc.on_boundary(f))
        assert len(fixed) == blocks
