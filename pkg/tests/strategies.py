"""Hypothesis strategies for exact polynomial forms."""
from fractions import Fraction

from hypothesis import strategies as st

from hpfeec.polyform import PolyForm, Polynomial, monomials
from hpfeec.simplex import wedge_indices

small_fractions = st.fractions(min_value=-3, max_value=3, max_denominator=4)


@st.composite
def polynomials(draw, n, max_degree=2, max_terms=4):
    monos = monomials(n, max_degree)
    chosen = draw(st.lists(st.sampled_from(monos), max_size=max_terms, unique=True))
    return Polynomial(n, {e: draw(small_fractions) for e in chosen})


@st.composite
def forms(draw, n, k, max_degree=2):
    comps = {}
    for s in wedge_indices(k, n):
        if draw(st.booleans()):
            comps[s] = draw(polynomials(n, max_degree))
    return PolyForm(n, k, comps)


@st.composite
def dims_and_degree(draw, max_n=3):
    n = draw(st.integers(1, max_n))
    k = draw(st.integers(0, n))
    return n, k


def as_fraction_matrix(rows):
    return [[Fraction(x) for x in r] for r in rows]
