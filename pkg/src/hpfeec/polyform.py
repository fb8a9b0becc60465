"""Exact polynomial differential forms on the reference simplex.

Polynomials are sparse maps from exponent tuples to coefficients, which are
kept as ``Fraction`` whenever the inputs are rational. A :class:`PolyForm`
maps increasing wedge indices to polynomial coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Mapping, Sequence

import numpy as np

from . import exact
from .simplex import shuffle_sign, sort_with_parity, wedge_indices


def _clean(terms: dict) -> dict:
    return {e: c for e, c in terms.items() if c != 0}


def _monomials(n: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total degree <= ``degree`` in graded lex order."""
    if n == 0:
        return [()]
    out: list[tuple[int, ...]] = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(prefix + (left,))
            return
        for e in range(left, -1, -1):
            rec(prefix + (e,), left - e, slots - 1)

    for d in range(degree + 1):
        rec((), d, n)
    return out


monomials = lru_cache(maxsize=None)(_monomials)


class Polynomial:
    """Sparse polynomial in ``n`` variables.

    Parameters
    ----------
    n : int
        Number of variables.
    terms : mapping
        Exponent tuple to coefficient. Zero coefficients are dropped.
    """

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[tuple, object] | None = None):
        self.n = n
        self.terms = _clean(dict(terms or {}))

    # construction
    @classmethod
    def constant(cls, n: int, c=1) -> "Polynomial":
        return cls(n, {(0,) * n: Fraction(c) if isinstance(c, int) else c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): Fraction(1)})

    @classmethod
    def barycentric(cls, n: int, i: int) -> "Polynomial":
        """Barycentric coordinate of vertex ``i`` on the reference simplex."""
        if i == 0:
            terms = {(0,) * n: Fraction(1)}
            for j in range(n):
                e = [0] * n
                e[j] = 1
                terms[tuple(e)] = Fraction(-1)
            return cls(n, terms)
        return cls.variable(n, i - 1)

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.n, other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, 0) + c
        return Polynomial(self.n, t)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            if other == 0:
                return Polynomial(self.n)
            return Polynomial(self.n, {e: c * other for e, c in self.terms.items()})
        t: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, 0) + c1 * c2
        return Polynomial(self.n, t)

    __rmul__ = __mul__

    def __pow__(self, p: int):
        out = Polynomial.constant(self.n, 1)
        for _ in range(p):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.n, other)
        return (self - other).is_zero()

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"x{i}^{p}" if p > 1 else f"x{i}" for i, p in enumerate(e) if p)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def diff(self, i: int) -> "Polynomial":
        t = {}
        for e, c in self.terms.items():
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                t[tuple(e2)] = c * e[i]
        return Polynomial(self.n, t)

    def __call__(self, point: Sequence):
        total = 0
        for e, c in self.terms.items():
            v = c
            for x, p in zip(point, e):
                if p:
                    v = v * x ** p
            total = total + v
        return total

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Float evaluation at an array of points of shape ``(m, n)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(points.shape[0])
        for e, c in self.terms.items():
            out += float(c) * np.prod(points ** np.asarray(e), axis=1)
        return out

    def compose_affine(self, a: Sequence[Sequence], b: Sequence) -> "Polynomial":
        """Return ``q(y) = p(A y + b)`` where ``A`` has ``self.n`` rows."""
        m = len(a[0]) if len(a) else 0
        lin = []
        for i in range(self.n):
            t = {(0,) * m: b[i]}
            for j in range(m):
                e = [0] * m
                e[j] = 1
                t[tuple(e)] = a[i][j]
            lin.append(Polynomial(m, t))
        powers: dict = {}

        def power(i, p):
            key = (i, p)
            if key not in powers:
                powers[key] = Polynomial.constant(m, 1) if p == 0 else power(i, p - 1) * lin[i]
            return powers[key]

        out = Polynomial(m)
        for e, c in self.terms.items():
            term = Polynomial.constant(m, c)
            for i, p in enumerate(e):
                if p:
                    term = term * power(i, p)
            out = out + term
        return out

    def integrate(self):
        """Exact integral over the reference simplex ``{x >= 0, sum x <= 1}``."""
        total = 0
        for e, c in self.terms.items():
            num = 1
            for p in e:
                num *= factorial(p)
            total = total + c * Fraction(num, factorial(sum(e) + self.n))
        return total

    def to_float(self) -> "Polynomial":
        return Polynomial(self.n, {e: float(c) for e, c in self.terms.items()})


def monomial_integral(exps: Sequence[int]) -> Fraction:
    """Closed form of the integral of a monomial over the reference simplex."""
    num = 1
    for p in exps:
        num *= factorial(p)
    return Fraction(num, factorial(sum(exps) + len(exps)))


class PolyForm:
    """Polynomial differential ``k``-form in ``n`` reference coordinates.

    Parameters
    ----------
    n, k : int
        Ambient dimension and form degree.
    comps : mapping
        Increasing wedge index (tuple over ``0..n-1``) to :class:`Polynomial`.
    """

    __slots__ = ("n", "k", "comps")

    def __init__(self, n: int, k: int, comps: Mapping[tuple, Polynomial] | None = None):
        if not 0 <= k:
            raise ValueError("negative form degree")
        self.n = n
        self.k = k
        clean = {}
        for s, p in (comps or {}).items():
            s = tuple(s)
            if len(s) != k or any(a >= b for a, b in zip(s, s[1:])):
                raise ValueError(f"bad wedge index {s} for a {k}-form")
            if not isinstance(p, Polynomial):
                p = Polynomial.constant(n, p)
            if not p.is_zero():
                clean[s] = p
        self.comps = clean

    @classmethod
    def basis_covector(cls, n: int, rate: Sequence[int], coef=None) -> "PolyForm":
        coef = Polynomial.constant(n, 1) if coef is None else coef
        return cls(n, len(rate), {tuple(rate): coef})

    @classmethod
    def scalar(cls, p: Polynomial) -> "PolyForm":
        return cls(p.n, 0, {(): p})

    @classmethod
    def dlambda(cls, n: int, i: int) -> "PolyForm":
        """Differential of barycentric coordinate ``i``."""
        return PolyForm.scalar(Polynomial.barycentric(n, i)).d()

    def component(self, rate) -> Polynomial:
        return self.comps.get(tuple(rate), Polynomial(self.n))

    def is_zero(self) -> bool:
        return not self.comps

    def __add__(self, other: "PolyForm") -> "PolyForm":
        if isinstance(other, int) and other == 0:  # allow sum()
            return self
        self._check(other)
        out = dict(self.comps)
        for s, p in other.comps.items():
            out[s] = out[s] + p if s in out else p
        return PolyForm(self.n, self.k, out)

    __radd__ = __add__

    def __neg__(self):
        return PolyForm(self.n, self.k, {s: -p for s, p in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        """Multiply by a scalar or a scalar polynomial."""
        return PolyForm(self.n, self.k, {s: p * c for s, p in self.comps.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyForm):
            return NotImplemented
        return self.n == other.n and self.k == other.k and (self - other).is_zero()

    def __repr__(self):
        if not self.comps:
            return f"0 ({self.k}-form)"
        return " + ".join(f"({p}) d{list(s)}" for s, p in sorted(self.comps.items()))

    def _check(self, other):
        if self.n != other.n or self.k != other.k:
            raise ValueError("form dimension/degree mismatch")

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.comps.values()), default=-1)

    def wedge(self, other: "PolyForm") -> "PolyForm":
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        k = self.k + other.k
        if k > self.n:
            return _ZeroForm(self.n, k)
        out: dict = {}
        for s1, p1 in self.comps.items():
            for s2, p2 in other.comps.items():
                sgn = shuffle_sign(s1, s2)
                if sgn == 0:
                    continue
                s = tuple(sorted(s1 + s2))
                term = p1 * p2 * sgn
                out[s] = out[s] + term if s in out else term
        return PolyForm(self.n, k, out)

    __xor__ = wedge

    def d(self) -> "PolyForm":
        """Exterior derivative."""
        if self.k >= self.n:
            return _ZeroForm(self.n, self.k + 1)
        out: dict = {}
        for s, p in self.comps.items():
            for i in range(self.n):
                if i in s:
                    continue
                dp = p.diff(i)
                if dp.is_zero():
                    continue
                ns, sgn = sort_with_parity((i,) + s)
                term = dp * sgn
                out[ns] = out[ns] + term if ns in out else term
        return PolyForm(self.n, self.k + 1, out)

    def __call__(self, point) -> dict:
        return {s: p(point) for s, p in self.comps.items()}

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Float values, shape ``(C(n,k), m)`` in lexicographic wedge order."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = wedge_indices(self.k, self.n)
        return np.array([self.component(s).evaluate(points) for s in idx])

    def integrate(self):
        """Integral of an ``n``-form over the reference simplex (positively oriented)."""
        if self.k != self.n:
            raise ValueError("only top-degree forms integrate over the simplex")
        return self.component(tuple(range(self.n))).integrate()

    def pullback(self, m: "AffineMap") -> "PolyForm":
        return pullback(self, m)

    def hodge_star(self, g=None) -> "PolyForm":
        return hodge_star(self, g)

    def to_float(self) -> "PolyForm":
        return PolyForm(self.n, self.k, {s: p.to_float() for s, p in self.comps.items()})


class _ZeroForm(PolyForm):
    """Zero form of a degree beyond the ambient dimension."""

    __slots__ = ()

    def __init__(self, n, k):
        self.n, self.k, self.comps = n, k, {}

    def d(self):
        return _ZeroForm(self.n, self.k + 1)


def wedge(a: PolyForm, b: PolyForm) -> PolyForm:
    return a.wedge(b)


def exterior_derivative(a: PolyForm) -> PolyForm:
    return a.d()


@dataclass(frozen=True)
class AffineMap:
    """Affine map ``x = J y + b`` from ``dim_in`` to ``dim_out`` coordinates."""

    linear: tuple
    offset: tuple

    def __init__(self, linear, offset=None):
        lin = tuple(tuple(r) for r in linear)
        object.__setattr__(self, "linear", lin)
        dim_out = len(lin)
        if offset is None:
            offset = (0,) * dim_out
        object.__setattr__(self, "offset", tuple(offset))

    @property
    def dim_out(self) -> int:
        return len(self.linear)

    @property
    def dim_in(self) -> int:
        return len(self.linear[0]) if self.linear else 0

    def metric(self) -> list[list]:
        """Induced metric ``J^T J`` for a map into Euclidean space."""
        j = self.linear
        return [[sum(j[r][a] * j[r][b] for r in range(self.dim_out))
                 for b in range(self.dim_in)] for a in range(self.dim_in)]

    def __call__(self, y):
        return tuple(sum(self.linear[i][j] * y[j] for j in range(self.dim_in)) + self.offset[i]
                     for i in range(self.dim_out))

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """Return ``self o inner``."""
        j1, j2 = self.linear, inner.linear
        lin = [[sum(j1[i][r] * j2[r][c] for r in range(self.dim_in)) for c in range(inner.dim_in)]
               for i in range(self.dim_out)]
        off = self(inner.offset)
        return AffineMap(lin, off)


def pullback(a: PolyForm, m: AffineMap) -> PolyForm:
    """Pull ``a`` (defined on the target) back along the affine map ``m``."""
    if m.dim_out != a.n:
        raise ValueError("map target dimension does not match the form")
    nin = m.dim_in
    if a.k > nin:
        return _ZeroForm(nin, a.k)
    out: dict = {}
    targets = wedge_indices(a.k, nin)
    for s, p in a.comps.items():
        q = p.compose_affine(m.linear, m.offset)
        if q.is_zero():
            continue
        for t in targets:
            c = exact.minor(m.linear, s, t)
            if c == 0:
                continue
            term = q * c
            out[t] = out[t] + term if t in out else term
    return PolyForm(nin, a.k, out)


def _identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def _metric_data(n: int, g):
    if g is None:
        g = _identity(n)
    ginv = exact.inverse(g)
    dg = exact.det(g)
    vol = exact.exact_sqrt(abs(dg))
    return ginv, vol


def hodge_star(a: PolyForm, g=None) -> PolyForm:
    """Hodge star with respect to a constant metric ``g`` (Riemannian).

    Uses the general formula with the inverse-metric minors, so it is valid
    for non-diagonal metrics as well.
    """
    n, k = a.n, a.k
    ginv, vol = _metric_data(n, g)
    out: dict = {}
    taus = wedge_indices(k, n)
    for s, p in a.comps.items():
        for t in taus:
            c = exact.minor(ginv, s, t)
            if c == 0:
                continue
            tc = tuple(i for i in range(n) if i not in t)
            sgn = shuffle_sign(t, tc)
            term = p * (c * sgn * vol)
            out[tc] = out[tc] + term if tc in out else term
    return PolyForm(n, n - k, out)


def coderivative(a: PolyForm, g=None) -> PolyForm:
    """Coderivative ``(-1)**(n(k+1)+1) * star d star`` for a Riemannian metric."""
    n, k = a.n, a.k
    if k == 0:
        return PolyForm(n, 0)
    sign = (-1) ** (n * (k + 1) + 1)
    return hodge_star(hodge_star(a, g).d(), g) * sign


def local_inner_product(a: PolyForm, b: PolyForm, g=None) -> Polynomial:
    """Density of the pointwise inner product, the coefficient of ``a ^ *b``."""
    if a.n != b.n or a.k != b.k:
        raise ValueError("forms must share dimension and degree")
    ginv, vol = _metric_data(a.n, g)
    out = Polynomial(a.n)
    for s, p in a.comps.items():
        for t, q in b.comps.items():
            c = exact.minor(ginv, s, t)
            if c != 0:
                out = out + p * q * (c * vol)
    return out


def l2_inner(a: PolyForm, b: PolyForm, g=None):
    """Exact L2 inner product over the reference simplex."""
    return local_inner_product(a, b, g).integrate()


@dataclass
class VectorValuedForm:
    """A form with values in ``R^m``: one :class:`PolyForm` per covector ``e^I``."""

    components: list = field(default_factory=list)

    def __post_init__(self):
        if self.components:
            n, k = self.components[0].n, self.components[0].k
            if any(c.n != n or c.k != k for c in self.components):
                raise ValueError("components must share (n, k)")

    @property
    def n(self) -> int:
        return self.components[0].n

    @property
    def k(self) -> int:
        return self.components[0].k

    def d(self) -> "VectorValuedForm":
        return VectorValuedForm([c.d() for c in self.components])

    def pullback(self, m: AffineMap) -> "VectorValuedForm":
        return VectorValuedForm([pullback(c, m) for c in self.components])


# Flattening and compiled evaluation

def form_vector(form: PolyForm, degree: int) -> list:
    """Coefficient vector over (wedge index, monomial up to ``degree``)."""
    monos = monomials(form.n, degree)
    pos = {e: i for i, e in enumerate(monos)}
    idx = wedge_indices(form.k, form.n)
    vec = [Fraction(0)] * (len(idx) * len(monos))
    for a, s in enumerate(idx):
        p = form.comps.get(s)
        if p is None:
            continue
        for e, c in p.terms.items():
            if e not in pos:
                raise ValueError("degree exceeds the flattening degree")
            vec[a * len(monos) + pos[e]] = c
    return vec


def form_rank(forms: Sequence[PolyForm]) -> int:
    forms = list(forms)
    if not forms:
        return 0
    deg = max(max(f.degree for f in forms), 0)
    return exact.rank([form_vector(f, deg) for f in forms])


class CompiledForms:
    """Dense float representation of a list of forms for fast evaluation.

    ``evaluate(points)`` returns an array of shape ``(len(forms), C(n,k), m)``.
    """

    def __init__(self, forms: Sequence[PolyForm], n: int, k: int):
        self.n, self.k = n, k
        forms = list(forms)
        deg = max([f.degree for f in forms] + [0])
        self.exps = np.array(monomials(n, deg), dtype=int).reshape(-1, n)
        pos = {tuple(e): i for i, e in enumerate(self.exps.tolist())}
        idx = wedge_indices(k, n)
        self.coef = np.zeros((len(forms), len(idx), len(self.exps)))
        for b, f in enumerate(forms):
            for a, s in enumerate(idx):
                p = f.comps.get(s)
                if p is None:
                    continue
                for e, c in p.terms.items():
                    self.coef[b, a, pos[e]] = float(c)
        self.degree = deg

    def monomial_values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        m = points.shape[0]
        vals = np.ones((len(self.exps), m))
        if self.n == 0:
            return vals
        pw = np.ones((self.degree + 1, m, self.n))
        for d in range(1, self.degree + 1):
            pw[d] = pw[d - 1] * points
        for i in range(self.n):
            vals *= pw[self.exps[:, i], :, i]
        return vals

    def evaluate(self, points: np.ndarray, rows=None) -> np.ndarray:
        coef = self.coef if rows is None else self.coef[rows]
        return np.einsum("bam,mq->baq", coef, self.monomial_values(points), optimize=True)


def simplex_inclusion(face: Sequence[int], n: int) -> AffineMap:
    """Affine map from the reference ``dim face`` simplex onto ``face`` of the reference ``n``-simplex."""
    verts = [tuple(Fraction(int(i == j - 1)) for i in range(n)) for j in range(n + 1)]
    v0 = verts[face[0]]
    lin = [[verts[face[c + 1]][r] - v0[r] for c in range(len(face) - 1)] for r in range(n)]
    return AffineMap(lin, v0)


def trace(form: PolyForm, face: Sequence[int]) -> PolyForm:
    """Trace of ``form`` on the subsimplex ``face`` of the reference simplex."""
    face = tuple(face)
    if len(face) - 1 < form.k:
        return _ZeroForm(len(face) - 1, form.k)
    return pullback(form, simplex_inclusion(face, form.n))
