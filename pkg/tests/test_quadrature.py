from fractions import Fraction
from math import factorial

import pytest
from hypothesis import given, strategies as st

from hpfeec.polyform import Polynomial, monomial_integral, monomials
from hpfeec.quadrature import grundmann_moeller, integrate, rule_for_degree


@pytest.mark.parametrize("n", [1, 2, 3])
def test_weights_sum_to_volume(n):
    for s in range(4):
        assert sum(grundmann_moeller(n, s).weights) == Fraction(1, factorial(n))


@pytest.mark.parametrize("n,s", [(1, 0), (1, 3), (2, 2), (3, 3)])
def test_exact_on_every_monomial_up_to_degree(n, s):
    rule = grundmann_moeller(n, s)
    assert rule.exact_degree == 2 * s + 1
    for e in monomials(n, rule.exact_degree):
        assert integrate(Polynomial(n, {e: Fraction(1)}), rule) == monomial_integral(e)


def test_not_exact_beyond_degree():
    rule = grundmann_moeller(2, 1)
    e = (4, 0)
    assert integrate(Polynomial(2, {e: Fraction(1)}), rule) != monomial_integral(e)


def test_single_point_rule_is_centroid():
    rule = grundmann_moeller(2, 0)
    assert rule.points == ((Fraction(1, 3),) * 3,)
    assert rule.weights == (Fraction(1, 2),)


def test_rule_for_degree_is_minimal():
    for d in range(8):
        rule = rule_for_degree(2, d)
        assert rule.exact_degree >= d
        assert rule.exact_degree - 2 < d or d == 0


def test_float_views():
    rule = grundmann_moeller(3, 2)
    assert rule.ref_points.shape == (len(rule), 3)
    assert rule.float_weights.sum() == pytest.approx(1 / 6)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        grundmann_moeller(0, 1)
    with pytest.raises(ValueError):
        grundmann_moeller(2, -1)


@given(st.integers(1, 3), st.lists(st.integers(0, 3), min_size=3, max_size=3))
def test_monomial_integral_matches_dirichlet_formula(n, e):
    e = tuple(e[:n])
    expect = Fraction(1)
    for a in e:
        expect *= factorial(a)
    expect /= factorial(sum(e) + n)
    assert monomial_integral(e) == expect


def test_interval_midpoint_rule():
    rule = grundmann_moeller(1, 0)
    assert rule.points == ((Fraction(1, 2), Fraction(1, 2)),) and rule.weights == (Fraction(1),)


def test_barycentric_product_integral():
    bary = [Polynomial.barycentric(2, i) for i in range(3)]
    prod = bary[0] * bary[1] * bary[2]
    for s in (1, 2, 3):
        assert integrate(prod, grundmann_moeller(2, s)) == Fraction(1, 120)
    xy = Polynomial.variable(2, 0) * Polynomial.variable(2, 1)
    assert integrate(xy, grundmann_moeller(2, 1)) == Fraction(1, 24)
