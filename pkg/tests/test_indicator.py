import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpfeec.basis import whitney_form
from hpfeec.indicator import (DecayFit, average_coefficients, build_eigenbasis, compiled_eigen, error_estimate,
                              expint_e1, indicate_form, indicate_polynomial, indicate_values, irls_fit,
                              legendre_operator, reconstruct, spectral_project)
from hpfeec.polyform import Polynomial, monomials

from oracles import e1_series, grid_decay_fit
from strategies import polynomials


def test_one_dimensional_operator_gives_legendre():
    x = Polynomial.variable(1, 0)
    p2 = x * x * 6 - x * 6 + 1  # shifted Legendre P2
    assert legendre_operator(p2) == p2 * 6


@pytest.mark.parametrize("n,r", [(1, 6), (2, 5), (3, 3)])
def test_eigenfunctions_exact(n, r):
    eb = build_eigenbasis(n, r)
    for p, polys in enumerate(eb.eigenfunctions):
        for q in polys:
            assert legendre_operator(q) == q * (p * (p + n))
    assert sum(eb.sizes) == len(monomials(n, r))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_eigenspace_dimensions(n):
    eb = build_eigenbasis(n, 4)
    assert eb.sizes == [math.comb(p + n - 1, n - 1) for p in range(5)]


def test_change_of_basis_is_inverse():
    eb = build_eigenbasis(2, 3)
    a, b = np.array(eb.to_monomial(), dtype=object), np.array(eb.from_monomial(), dtype=object)
    assert (a.dot(b) == np.eye(len(a), dtype=int)).all()


@given(st.data())
def test_projection_roundtrip(data):
    n = data.draw(st.integers(1, 2))
    q = data.draw(polynomials(n, 3))
    eb = build_eigenbasis(n, 3)
    assert reconstruct(spectral_project(q, eb), eb) == q


@given(st.data())
def test_polynomial_content_has_no_high_coefficients(data):
    n = data.draw(st.integers(1, 3))
    deg = data.draw(st.integers(0, 2))
    q = data.draw(polynomials(n, deg))
    eb = build_eigenbasis(n, 4)
    coeffs = spectral_project(q, eb)
    assert all(c == 0 for p in range(deg + 1, 5) for c in coeffs[p])


def test_irls_recovers_exact_exponential():
    p = np.arange(1, 7)
    fit = irls_fit(2.5 * np.exp(-1.3 * p), p)
    assert fit.c == pytest.approx(2.5, rel=1e-9)
    assert fit.rate == pytest.approx(1.3, rel=1e-9)


def test_irls_ignores_one_outlier():
    p = np.arange(1, 8)
    a = 3.0 * np.exp(-0.7 * p)
    a[3] *= 50
    fit = irls_fit(a, p)
    assert fit.rate == pytest.approx(0.7, abs=1e-6)


@given(st.floats(0.05, 5.0), st.floats(0.1, 100.0))
def test_irls_against_grid_oracle(rate, c):
    p = np.arange(1, 6)
    a = c * np.exp(-rate * p)
    fit = irls_fit(a, p)
    gc, gs = grid_decay_fit(a, p)
    assert abs(fit.rate - gs) < 1e-6
    assert abs(fit.c - gc) < 1e-6 * max(1.0, gc)


def test_irls_degenerate_input():
    assert not irls_fit([]).reliable
    assert not irls_fit([0.0, 0.0]).reliable


@pytest.mark.parametrize("x", [1e-6, 0.1, 0.5, 0.99, 1.0, 2.0, 7.5, 20.0, 40.0])
def test_e1_against_series(x):
    assert expint_e1(x) == pytest.approx(e1_series(x), rel=1e-13)


def test_e1_frozen_values():
    # mpmath.e1 at 30 digits
    assert expint_e1(1.0) == pytest.approx(0.219383934395520273677163775460, rel=1e-14)
    assert expint_e1(0.01) == pytest.approx(4.03792957653811381117712962355, rel=1e-14)


def test_e1_rejects_nonpositive():
    with pytest.raises(ValueError):
        expint_e1(0.0)


def test_error_estimate_flags_flat_spectrum():
    estimate, flag = error_estimate(DecayFit(1.0, 0.0), 1.0, 3)
    assert flag and estimate > 1
    est2, flag2 = error_estimate(DecayFit(1.0, 2.0), math.exp(-6.0), 3)
    assert not flag2 and est2 < 0.01


def test_indicator_of_low_degree_polynomial_is_small():
    x = Polynomial.variable(2, 0)
    res = indicate_polynomial(x * x + x, 4)
    assert res.estimate < 1e-12


def test_indicator_rate_for_analytic_function():
    ce = compiled_eigen(1, 8)
    x = ce.rule.ref_points[:, 0]
    res = indicate_values(np.exp(3 * x)[None], 1, 8)
    smooth = res.rate
    res2 = indicate_values(np.abs(x - 0.37)[None] ** 0.5, 1, 8)
    assert smooth > 1.0 > res2.rate
    assert res.estimate < res2.estimate


def test_two_point_fit_carries_no_rate():
    ce = compiled_eigen(2, 2)
    vals = np.exp(ce.rule.ref_points.sum(axis=1))[None]
    res = indicate_values(vals, 2, 2)
    assert not res.reliable and res.estimate > 0


def test_triangle_eigenvalues():
    eb = build_eigenbasis(2, 3)
    for p, value in ((1, 3), (2, 8), (3, 15)):
        q = eb.eigenfunctions[p][0]
        assert legendre_operator(q) == q * value


def test_signed_and_absolute_averages():
    assert list(average_coefficients([[1], [3, -3]])) == [1.0, 3.0]
    assert list(average_coefficients([[1], [3, -3]], absolute=False)) == [1.0, 0.0]
    assert list(average_coefficients([[0], [], [5, 0]])) == [0.0, 0.0, 2.5]


def test_irls_outlier_tripled_against_grid_oracle():
    p = np.arange(1, 9)
    a = 2 * np.exp(-0.5 * p)
    a[3] *= 3
    fit = irls_fit(a)
    c_ref, s_ref = grid_decay_fit(a, p)
    assert fit.rate == pytest.approx(0.5, rel=0.1)
    assert fit.rate == pytest.approx(s_ref, rel=0.1)


def test_constant_spectrum_has_no_decay():
    assert irls_fit(np.ones(5)).rate == pytest.approx(0, abs=1e-12)


def test_error_estimate_closed_form_values():
    assert error_estimate(DecayFit(0.0, 0.0), 0.0, 3)[0] == 0
    assert error_estimate(DecayFit(0.0, 0.0), 1.0, 2)[0] == pytest.approx(math.sqrt(2 / 5), rel=1e-15)
    estimate, flag = error_estimate(DecayFit(1.0, 1.0), 0.0, 3)
    assert not flag
    assert estimate == pytest.approx(math.sqrt(math.e * float(e1_series(9.0))), rel=1e-13)


def test_whitney_form_has_no_content_above_first_order():
    w = whitney_form(2, (0, 1))
    eb = build_eigenbasis(2, 4)
    for s in ((0,), (1,)):
        coeffs = spectral_project(w.component(s), eb)
        assert any(c != 0 for c in coeffs[1])
        assert all(c == 0 for cs in coeffs[2:] for c in cs)
    assert indicate_form(w, 4).estimate < 1e-12


def test_constant_rescaling_leaves_rate_unchanged():
    ce = compiled_eigen(2, 6)
    vals = np.exp(ce.rule.ref_points @ np.array([1.5, -0.7]))[None]
    base = indicate_values(vals, 2, 6)
    for scale in (1e-3, 7.0):
        res = indicate_values(scale * vals, 2, 6)
        assert res.rate == pytest.approx(base.rate, rel=1e-10)
        assert res.estimate == pytest.approx(scale * base.estimate, rel=1e-10)
