"""Spectral error and regularity indicator on the reference simplex.

A polynomial on the reference simplex is expanded in eigenfunctions of the
Legendre-type operator

    L u = -sum_{i<j} D_ij (lambda_i lambda_j D_ij u),   D_ij = d/d(v_j - v_i),

whose eigenvalue on the degree-``p`` invariant subspace is ``p (p + n)``.
Averaged coefficient magnitudes ``a_p`` are fitted to ``c exp(-rate p)``
in the L1 sense; the decay rate measures local regularity and the
fitted tail gives an error estimate.
"""
from __future__ import annotations

import math
from itertools import combinations
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import flint
import numpy as np

from . import exact
from .polyform import PolyForm, Polynomial, monomial_integral, monomials
from .quadrature import rule_for_degree

EULER_GAMMA = 0.57721566490153286060651209008240243


def legendre_operator(u: Polynomial) -> Polynomial:
    """Apply the divergence-form operator to a polynomial in reference coordinates."""
    n = u.n
    bary = [Polynomial.barycentric(n, i) for i in range(n + 1)]

    def dir_deriv(p: Polynomial, i: int, j: int) -> Polynomial:
        out = Polynomial(n)
        if j > 0:
            out = out + p.diff(j - 1)
        if i > 0:
            out = out - p.diff(i - 1)
        return out

    total = Polynomial(n)
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            total = total - dir_deriv(bary[i] * bary[j] * dir_deriv(u, i, j), i, j)
    return total


@dataclass
class EigenBasis:
    """Eigenfunctions of the Legendre-type operator up to degree ``r``.

    Attributes
    ----------
    eigenfunctions : list of list of Polynomial
        ``eigenfunctions[p]`` spans the eigenspace of ``p (p + n)``; exact, orthogonal.
    scale : list of ndarray
        Float factors making each eigenfunction's mean square ``1/(2p+1)``.
    """

    n: int
    r: int
    eigenfunctions: list
    scale: list
    norms: list = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.eigenfunctions]

    @property
    def monomials(self) -> list[tuple]:
        return monomials(self.n, self.r)

    def to_monomial(self) -> list[list[Fraction]]:
        """Exact matrix whose columns hold the eigenfunctions in monomial coefficients."""
        monos = self.monomials
        cols = [q for polys in self.eigenfunctions for q in polys]
        return [[Fraction(q.terms.get(e, 0)) for q in cols] for e in monos]

    def from_monomial(self) -> list[list[Fraction]]:
        """Exact inverse of :meth:`to_monomial`."""
        return exact.inverse(self.to_monomial())

    def flat(self) -> list[tuple[int, Polynomial, float, float]]:
        out = []
        for p, (polys, sc, nm) in enumerate(zip(self.eigenfunctions, self.scale, self.norms)):
            for q, s, m in zip(polys, sc, nm):
                out.append((p, q, s, m))
        return out


@lru_cache(maxsize=None)
def build_eigenbasis(n: int, r: int) -> EigenBasis:
    """Exact eigen-decomposition of the polynomials of degree ``<= r``."""
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    monos = monomials(n, r)
    pos = {e: i for i, e in enumerate(monos)}
    cols = []
    for e in monos:
        img = legendre_operator(Polynomial(n, {e: Fraction(1)}))
        col = [Fraction(0)] * len(monos)
        for e2, c in img.terms.items():
            col[pos[e2]] = c
        cols.append(col)
    lmat = [list(row) for row in zip(*cols)]
    vol = Fraction(1, math.factorial(n))
    eigenfunctions, scale, norms = [], [], []
    mass = _monomial_mass(monos)
    for p in range(r + 1):
        w = p * (p + n)
        shifted = [[lmat[i][j] - (w if i == j else 0) for j in range(len(monos))]
                   for i in range(len(monos))]
        null = exact.nullspace(shifted, len(monos))
        vecs, sq = _orthogonalize(null, mass)
        eigenfunctions.append([Polynomial(n, {monos[i]: exact.from_fmpq(c) for i, c in enumerate(v) if c != 0})
                    for v in vecs])
        nm = [float(x) for x in sq]
        norms.append(nm)
        scale.append(np.array([math.sqrt(float(vol) / ((2 * p + 1) * m)) for m in nm]))
    if sum(len(b) for b in eigenfunctions) != len(monos):
        raise RuntimeError("eigenspaces do not exhaust the polynomial space")
    return EigenBasis(n, r, eigenfunctions, scale, norms)


def _monomial_mass(monos: list[tuple]) -> flint.fmpq_mat:
    m = len(monos)
    return flint.fmpq_mat(m, m, [exact.to_fmpq(monomial_integral(tuple(a + b for a, b in zip(e1, e2))))
                                 for e1 in monos for e2 in monos])


def _orthogonalize(vectors, mass: flint.fmpq_mat):
    """Exact Gram-Schmidt of coefficient vectors in the L2 inner product given by ``mass``.

    Returns the vectors (lists of fmpq) and their squared norms.
    """
    m = mass.nrows()
    out, images, sq = [], [], []
    for vec in vectors:
        v = [exact.to_fmpq(x) for x in vec]
        for b, mb, nb in zip(out, images, sq):
            c = sum((x * y for x, y in zip(v, mb)), flint.fmpq(0))
            if c != 0:
                f = c / nb
                v = [x - f * y for x, y in zip(v, b)]
        mv = mass * flint.fmpq_mat(m, 1, v)
        mv = [mv[i, 0] for i in range(m)]
        out.append(v)
        images.append(mv)
        sq.append(sum((x * y for x, y in zip(v, mv)), flint.fmpq(0)))
    return out, sq


class CompiledEigen:
    """Float evaluation and projection data for an :class:`EigenBasis`."""

    def __init__(self, eb: EigenBasis):
        self.eb = eb
        flat = eb.flat()
        self.order = np.array([p for p, _, _, _ in flat])
        rule = rule_for_degree(eb.n, 2 * eb.r + 1)
        self.rule = rule
        pts = rule.ref_points
        vals = np.array([q.evaluate(pts) * s for _, q, s, _ in flat])
        self.values = vals  # scaled eigenfunctions at rule points
        self.mass = np.einsum("aq,q->a", vals ** 2, rule.float_weights)


@lru_cache(maxsize=None)
def compiled_eigen(n: int, r: int) -> CompiledEigen:
    return CompiledEigen(build_eigenbasis(n, r))


def spectral_project(a: Polynomial, eb: EigenBasis) -> list[list]:
    """Exact coefficients of ``a`` in the (unscaled) eigenfunctions, grouped by ``p``."""
    if a.degree > eb.r:
        raise ValueError("polynomial degree exceeds the eigenbasis order")
    out = []
    for polys in eb.eigenfunctions:
        out.append([(a * q).integrate() / (q * q).integrate() for q in polys])
    return out


def reconstruct(coeffs: Sequence[Sequence], eb: EigenBasis) -> Polynomial:
    out = Polynomial(eb.n)
    for cs, polys in zip(coeffs, eb.eigenfunctions):
        for c, q in zip(cs, polys):
            out = out + q * c
    return out


def project_values(values: np.ndarray, ce: CompiledEigen) -> list[np.ndarray]:
    """Scaled spectral coefficients from values at ``ce.rule`` points."""
    w = ce.rule.float_weights
    coef = np.einsum("aq,q,q->a", ce.values, values, w) / ce.mass
    return [coef[ce.order == p] for p in range(ce.eb.r + 1)]


def average_coefficients(coeffs: Sequence[Sequence], absolute: bool = True) -> np.ndarray:
    """Mean over each eigenspace, of absolute values by default."""
    out = []
    for cs in coeffs:
        cs = np.asarray([float(c) for c in cs])
        if cs.size == 0:
            out.append(0.0)
        else:
            out.append(float(np.mean(np.abs(cs)) if absolute else np.mean(cs)))
    return np.array(out)


@dataclass
class DecayFit:
    c: float
    rate: float
    reliable: bool = True
    iterations: int = 0


def irls_fit(a: Sequence[float], p: Sequence[int] | None = None, max_iter: int = 50,
             tol: float = 1e-10) -> DecayFit:
    """L1 fit of ``log a_p = log c - rate p`` by iteratively reweighted least squares."""
    a = np.asarray(a, dtype=float)
    p = np.arange(1, len(a) + 1) if p is None else np.asarray(p, dtype=float)
    if a.size == 0 or not np.any(a > 0):
        return DecayFit(0.0, 0.0, False)
    cut = 1e-14 * a.max()
    use = a > cut
    if use.sum() < 2:
        return DecayFit(float(a.max()), 0.0, False)
    x, y = p[use], np.log(a[use])
    design = np.column_stack([np.ones_like(x), -x])
    w = np.ones_like(x)
    params = np.zeros(2)
    it = 0
    for it in range(1, max_iter + 1):
        sw = np.sqrt(w)
        new, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        done = np.max(np.abs(new - params)) < tol
        params = new
        res = y - design @ params
        w = 1.0 / np.maximum(np.abs(res), 1e-12)
        if done:
            break
    return DecayFit(float(np.exp(params[0])), float(params[1]), True, it)


def expint_e1(x: float) -> float:
    """Exponential integral ``E1(x)`` for ``x > 0``."""
    if x <= 0:
        raise ValueError("E1 requires a positive argument")
    if x < 1.0:
        total, term, k = 0.0, 1.0, 1
        while True:
            term *= -x / k
            add = -term / k
            total += add
            if abs(add) < 1e-17 * abs(total) or k > 200:
                break
            k += 1
        return -EULER_GAMMA - math.log(x) + total
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x)


TAIL_TERMS = 10_000
RATE_MIN = 1e-8
MIN_FIT_POINTS = 3


def error_estimate(fit: DecayFit, a_r: float, r: int) -> tuple[float, bool]:
    """Tail error estimate; the flag is set when the spectrum does not decay."""
    first = 2.0 * a_r ** 2 / (2 * r + 1)
    if fit.c == 0:
        return math.sqrt(first), False
    if fit.rate <= RATE_MIN or not fit.reliable:
        pp = np.arange(r + 1, r + 1 + TAIL_TERMS)
        second = fit.c ** 2 * float(np.sum(1.0 / (2 * pp + 1)))
        return math.sqrt(first + second), True
    second = fit.c ** 2 * math.exp(fit.rate) * expint_e1((2 * r + 3) * fit.rate)
    return math.sqrt(first + second), False


@dataclass
class IndicatorResult:
    estimate: float
    rate: float
    reliable: bool
    nondecaying: bool
    detail: list = field(default_factory=list)


def indicate_values(values: np.ndarray, n: int, r: int, volume: float | None = None,
                    absolute: bool = True) -> IndicatorResult:
    """Indicator for component values sampled at the eigen rule points.

    ``values`` has shape ``(ncomp, npoints)``. ``volume`` is the physical
    cell measure; the reference estimate is a root-mean-square error and is
    rescaled by ``sqrt(volume)``.
    """
    ce = compiled_eigen(n, r)
    values = np.atleast_2d(values)
    est2, rates, reliable, nondec, detail = 0.0, [], False, False, []
    for comp in values:
        coeffs = project_values(comp, ce)
        ap = average_coefficients(coeffs, absolute)
        if r < 2 or not np.any(ap[1:] > 1e-14 * max(ap.max(), 1e-300)):
            fit = DecayFit(0.0, 0.0, False)
        else:
            fit = irls_fit(ap[1:])
        e, flag = error_estimate(fit, ap[r] if r < len(ap) else 0.0, r)
        est2 += e * e
        # two coefficients always fit exactly, so they say nothing about decay
        if fit.reliable and r >= MIN_FIT_POINTS:
            rates.append(fit.rate)
            reliable = True
        nondec = nondec or flag
        detail.append((e, fit.rate, fit.reliable and r >= MIN_FIT_POINTS))
    estimate = math.sqrt(est2)
    if volume is not None:
        estimate *= math.sqrt(volume)
    rate = min(rates) if rates else 0.0
    return IndicatorResult(estimate, rate, reliable, nondec, detail)


def indicate_polynomial(a: Polynomial, r: int, absolute: bool = True) -> IndicatorResult:
    """Indicator of a single polynomial given on the reference simplex."""
    ce = compiled_eigen(a.n, r)
    return indicate_values(a.evaluate(ce.rule.ref_points)[None], a.n, r, None, absolute)


def indicate_cell(space, coef: np.ndarray, leaf, r: int, ncomp_fields: Sequence[tuple] = ()) -> IndicatorResult:
    """Indicator of a discrete field on a leaf cell.

    Physical components are polynomials in the cell's reference coordinates
    (the cell map is affine), so they are sampled at the eigen rule points.
    """
    from .assembly import evaluate_field
    hc = space.hc
    ce = compiled_eigen(hc.n, r)
    vals = evaluate_field(space, coef, leaf, ce.rule.ref_points)
    x = hc.coords(leaf)
    vol = abs(np.linalg.det((x[1:] - x[0]).T)) / math.factorial(hc.n)
    return indicate_values(vals, hc.n, r, vol)


def indicate_form(form: PolyForm, r: int, absolute: bool = True) -> IndicatorResult:
    """Indicator of a reference-element form, one component per wedge index."""
    ce = compiled_eigen(form.n, r)
    pts = ce.rule.ref_points
    comps = [form.component(s).evaluate(pts) for s in combinations(range(form.n), form.k)]
    return indicate_values(np.array(comps), form.n, r, None, absolute)


def aggregate(results: Sequence[IndicatorResult]) -> IndicatorResult:
    """Combine component results: root-sum-square error, minimum decay rate."""
    estimate = math.sqrt(sum(x.estimate ** 2 for x in results))
    rel = [x.rate for x in results if x.reliable]
    return IndicatorResult(estimate, min(rel) if rel else 0.0, bool(rel),
                           any(x.nondecaying for x in results),
                           [d for x in results for d in x.detail])
