"""Polynomial form bases on the reference simplex.

Face-associated spanning sets for the trimmed (``minus``) and full
polynomial families are generated from barycentric monomials times Whitney
forms or times wedges of barycentric differentials. The p-hierarchical basis
is obtained by walking the chain of nested spaces

    P1- (Whitney), P1, P2-, P2, P3-, ...

and keeping, per face, the candidates whose traces on that face enlarge the
span reached so far.
"""
from __future__ import annotations

import hashlib
import os
import pickle
import random
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Sequence

import flint

from . import exact
from .polyform import (CompiledForms, PolyForm, Polynomial, form_vector, monomial_integral,
                       monomials, trace)
from .simplex import increasing_maps, wedge_indices

MINUS = "minus"
FULL = "full"
FAMILIES = (MINUS, FULL)

SCHEMA_VERSION = 1


def dim_full(n: int, k: int, r: int) -> int:
    """Dimension of the full polynomial family of order ``r`` (degree ``r``)."""
    if r < 0 or k > n:
        return 0
    return comb(n + r, n) * comb(n, k)


def dim_minus(n: int, k: int, r: int) -> int:
    """Dimension of the trimmed family of order ``r``."""
    if r < 1 or k > n:
        return 0
    return comb(r + n, r + k) * comb(r + k - 1, k)


def space_dim(n: int, k: int, r: int, family: str) -> int:
    return dim_minus(n, k, r) if family == MINUS else dim_full(n, k, r)


def _bary(n: int) -> list[Polynomial]:
    return [Polynomial.barycentric(n, i) for i in range(n + 1)]


def _dbary(n: int) -> list[PolyForm]:
    return [PolyForm.dlambda(n, i) for i in range(n + 1)]


def whitney_form(n: int, rate: Sequence[int]) -> PolyForm:
    """Whitney form of the subsimplex ``rate`` of the reference ``n``-simplex."""
    rate = tuple(rate)
    bary, dl = _bary(n), _dbary(n)
    k = len(rate) - 1
    out = PolyForm(n, k)
    for i, s in enumerate(rate):
        term = PolyForm.scalar(bary[s])
        for j, t in enumerate(rate):
            if j != i:
                term = term.wedge(dl[t])
        out = out + term * ((-1) ** i)
    return out


def dlambda_wedge(n: int, rate: Sequence[int]) -> PolyForm:
    dl = _dbary(n)
    out = PolyForm.scalar(Polynomial.constant(n, 1))
    for s in rate:
        out = out.wedge(dl[s])
    return out


def bary_monomial(n: int, alpha: dict) -> Polynomial:
    bary = _bary(n)
    out = Polynomial.constant(n, 1)
    for i, p in sorted(alpha.items()):
        out = out * bary[i] ** p
    return out


def _multi_indices(face: Sequence[int], degree: int):
    """Exponent dicts over the vertices of ``face`` with total ``degree``."""
    face = tuple(face)

    def rec(i, left):
        if i == len(face) - 1:
            yield {face[i]: left} if left else {}
            return
        for e in range(left, -1, -1):
            for rest in rec(i + 1, left - e):
                d = dict(rest)
                if e:
                    d[face[i]] = e
                yield d

    if not face:
        return
    yield from rec(0, degree)


def _support(alpha: dict) -> set:
    return {i for i, p in alpha.items() if p}


def face_candidates(n: int, k: int, r: int, family: str, face: Sequence[int]) -> list[PolyForm]:
    """Spanning forms of the order-``r`` family associated with ``face``.

    Minus family: barycentric monomials of degree ``r-1`` times Whitney forms.
    Full family: monomials of degree ``r`` times wedges of ``k`` differentials.
    The support and minimal-index conditions make the union over faces a basis.
    """
    face = tuple(face)
    fset = set(face)
    out: list[PolyForm] = []
    if len(face) - 1 < k or r < 1:
        return out
    if family == MINUS:
        for rate in increasing_maps(k, len(face) - 1):
            sig = tuple(face[i] for i in rate)
            w = None
            for alpha in _multi_indices(face, r - 1):
                if _support(alpha) | set(sig) != fset:
                    continue
                if any(alpha.get(i, 0) for i in range(min(sig))):
                    continue
                if w is None:
                    w = whitney_form(n, sig)
                out.append(w * bary_monomial(n, alpha))
    elif family == FULL:
        sel = increasing_maps(k - 1, len(face) - 1) if k > 0 else [()]
        for rate in sel:
            sig = tuple(face[i] for i in rate)
            rest = fset - set(sig)
            if not rest:
                continue
            lo = min(rest)
            w = None
            for alpha in _multi_indices(face, r):
                if _support(alpha) | set(sig) != fset:
                    continue
                if any(alpha.get(i, 0) for i in range(lo)):
                    continue
                if w is None:
                    w = dlambda_wedge(n, sig)
                out.append(w * bary_monomial(n, alpha))
    else:
        raise ValueError(f"unknown family {family!r}")
    return out


@dataclass
class FaceSpaceBlock:
    """Forms associated with face ``f`` of the reference simplex."""

    f: tuple
    family: str
    order: int
    span: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.span)


def faces_for_degree(n: int, k: int) -> list[tuple[int, ...]]:
    """Faces that can carry ``k``-forms, in canonical order (dimension, then lex)."""
    return [f for d in range(k, n + 1) for f in increasing_maps(d, n)]


def build_basis(n: int, k: int, r: int, family: str) -> list[FaceSpaceBlock]:
    """Face-decomposed basis of the order-``r`` space (not p-hierarchical)."""
    if not (0 <= k <= n) or r < 1 or family not in FAMILIES:
        raise ValueError(f"inconsistent arguments n={n} k={k} r={r} family={family}")
    blocks = [FaceSpaceBlock(f, family, r, face_candidates(n, k, r, family, f))
              for f in faces_for_degree(n, k)]
    forms = [w for b in blocks for w in b.span]
    expected = space_dim(n, k, r, family)
    if len(forms) != expected or rank_of(forms) != expected:
        raise RuntimeError("generated face bases are not a basis; this is a bug")
    return blocks


def rank_of(forms: Sequence[PolyForm]) -> int:
    forms = list(forms)
    if not forms:
        return 0
    deg = max(max(f.degree for f in forms), 0)
    return exact.rank([form_vector(f, deg) for f in forms])


def stage_chain(order: int) -> list[tuple[int, str]]:
    """Stages ``(1, minus), (1, full), (2, minus), ...`` up to ``(order, full)``."""
    return [(q, fam) for q in range(1, order + 1) for fam in (MINUS, FULL)]


@dataclass(frozen=True)
class Block:
    """One hierarchical difference block: forms ``start:stop`` belong to face ``f``."""

    f: tuple
    order: int
    family: str
    start: int
    stop: int

    def __len__(self):
        return self.stop - self.start


class PHierarchicalBasis:
    """p-hierarchical basis of ``k``-forms on the reference ``n``-simplex.

    Blocks are stored face by face; inside a face they follow the stage chain.
    Taking all blocks of a face up to stage ``(r, minus)`` gives the trimmed
    family of order ``r``, up to ``(r, full)`` the full family.
    """

    def __init__(self, n: int, k: int, max_order: int, forms: list, blocks: list[Block]):
        self.n, self.k, self.max_order = n, k, max_order
        self.forms = forms
        self.blocks = blocks
        self._face_blocks: dict = {}
        for b in blocks:
            self._face_blocks.setdefault(b.f, []).append(b)
        self._compiled = None
        self._compiled_d = None
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.forms)

    @property
    def faces(self) -> list[tuple]:
        return list(self._face_blocks)

    def face_blocks(self, f) -> list[Block]:
        return self._face_blocks.get(tuple(f), [])

    def _stage_limit(self, order: int, family: str) -> int:
        if order < 1:
            return 0
        if order > self.max_order:
            raise ValueError(f"order {order} beyond built range {self.max_order}")
        return 2 * order - (1 if family == MINUS else 0)

    def count(self, f, order: int, family: str) -> int:
        """Number of forms of face ``f`` in the order-``order`` space."""
        limit = self._stage_limit(order, family)
        chain = stage_chain(self.max_order)
        total = 0
        for b in self.face_blocks(f):
            if chain.index((b.order, b.family)) < limit:
                total += len(b)
        return total

    def basis_indices(self, f, order: int, family: str) -> list[range]:
        """Index ranges of face ``f`` forms for the requested space."""
        f = tuple(f)
        limit = self._stage_limit(order, family)
        blocks = self.face_blocks(f)
        if len(f) - 1 < self.k or not blocks:
            return []
        chain = stage_chain(self.max_order)
        stop = blocks[0].start
        for b in blocks:
            if chain.index((b.order, b.family)) < limit:
                stop = b.stop
        return [range(blocks[0].start, stop)] if stop > blocks[0].start else []

    def indices(self, orders: dict, family: str) -> list[int]:
        """Concatenated indices for per-face orders ``{face: order}``."""
        out: list[int] = []
        for f, r in orders.items():
            for rg in self.basis_indices(f, r, family):
                out.extend(rg)
        return out

    def space(self, order: int, family: str) -> list[PolyForm]:
        idx = []
        for f in self.faces:
            for rg in self.basis_indices(f, order, family):
                idx.extend(rg)
        return [self.forms[i] for i in idx]

    @property
    def compiled(self) -> CompiledForms:
        with self._lock:
            if self._compiled is None:
                self._compiled = CompiledForms(self.forms, self.n, self.k)
            return self._compiled

    @property
    def compiled_d(self) -> CompiledForms:
        with self._lock:
            if self._compiled_d is None:
                if self.k >= self.n:
                    self._compiled_d = None
                else:
                    self._compiled_d = CompiledForms([w.d() for w in self.forms], self.n, self.k + 1)
            return self._compiled_d


def _mass_matrix(n: int, degree: int):
    monos = monomials(n, degree)
    return flint.fmpq_mat(len(monos), len(monos),
                          [exact.to_fmpq(monomial_integral(tuple(a + b for a, b in zip(e1, e2))))
                           for e1 in monos for e2 in monos])


def _unflatten(vec, n: int, k: int, degree: int) -> PolyForm:
    monos = monomials(n, degree)
    nm = len(monos)
    comps = {}
    for a, s in enumerate(wedge_indices(k, n)):
        terms = {monos[j]: exact.from_fmpq(vec[a * nm + j]) for j in range(nm) if vec[a * nm + j] != 0}
        if terms:
            comps[s] = Polynomial(n, terms)
    return PolyForm(n, k, comps)


def _gram_schmidt(new: list[PolyForm], prev: list[PolyForm]) -> list[PolyForm]:
    """Exact L2 Gram-Schmidt of ``new`` against ``prev`` and within itself."""
    if not new:
        return []
    n, k = new[0].n, new[0].k
    deg = max(w.degree for w in new + prev)
    mass = _mass_matrix(n, deg)
    ncomp = len(wedge_indices(k, n))
    nm = mass.nrows()

    def vec(w):
        return [exact.to_fmpq(x) for x in form_vector(w, deg)]

    def inner(u, mu):
        return sum((u[i] * mu[i] for i in range(len(u))), flint.fmpq(0))

    def apply_mass(u):
        out = []
        for a in range(ncomp):
            col = flint.fmpq_mat(nm, 1, u[a * nm:(a + 1) * nm])
            mc = mass * col
            out.extend(mc[i, 0] for i in range(nm))
        return out

    basis = [vec(p) for p in prev]
    mbasis = [apply_mass(b) for b in basis]
    norms = [inner(b, mb) for b, mb in zip(basis, mbasis)]
    out = []
    for w in new:
        v = vec(w)
        for b, mb, nb in zip(basis, mbasis, norms):
            c = inner(v, mb)
            if c != 0:
                f = c / nb
                v = [x - f * y for x, y in zip(v, b)]
        mv = apply_mass(v)
        basis.append(v)
        mbasis.append(mv)
        norms.append(inner(v, mv))
        out.append(_unflatten(v, n, k, deg))
    return out


def _select(prev_traces: list[PolyForm], cand_traces: list[PolyForm]) -> list[int]:
    """Indices of candidates kept by a greedy exact-rank scan on traces."""
    allf = prev_traces + cand_traces
    if not cand_traces:
        return []
    deg = max(max(f.degree for f in allf), 0)
    cols = [form_vector(f, deg) for f in allf]
    rows = [list(r) for r in zip(*cols)]
    piv = exact.pivot_columns(rows)
    base = len(prev_traces)
    if sum(1 for p in piv if p < base) != base:
        raise RuntimeError("previous traces are not independent")
    return [p - base for p in piv if p >= base]


def _chain_blocks(n: int, k: int, stages: list[tuple[int, str]], orthogonalize: bool = True):
    forms: list[PolyForm] = []
    blocks: list[Block] = []
    for f in faces_for_degree(n, k):
        prev_traces: list[PolyForm] = []
        kept_bubbles: list[PolyForm] = []
        for q, fam in stages:
            cands = face_candidates(n, k, q, fam, f)
            traces = [trace(c, f) for c in cands]
            chosen = [cands[i] for i in _select(prev_traces, traces)]
            prev_traces.extend(trace(c, f) for c in chosen)
            if orthogonalize and len(f) == n + 1 and chosen:
                chosen = _gram_schmidt(chosen, kept_bubbles)
                kept_bubbles.extend(chosen)
            start = len(forms)
            forms.extend(chosen)
            blocks.append(Block(f, q, fam, start, len(forms)))
    return forms, blocks


def hierarchize(bases: Sequence[Sequence[FaceSpaceBlock]], family: str) -> PHierarchicalBasis:
    """p-hierarchical basis from a nested sequence of face-decomposed bases.

    ``bases[q-1]`` must decompose the order-``q`` space of ``family``. For the
    full family the Whitney stage is split off first, so the first block of
    each face is always its Whitney block.
    """
    if not bases:
        raise ValueError("empty basis sequence")
    first = next(b for b in bases[0] if b.span)
    n, k = first.span[0].n, first.span[0].k
    for q, blocks in enumerate(bases, start=1):
        if any(b.family != family or b.order != q for b in blocks):
            raise ValueError("supplied sequence is not the nested family sequence")
    forms: list[PolyForm] = []
    out_blocks: list[Block] = []
    by_face = [{b.f: b for b in blocks} for blocks in bases]
    for f in faces_for_degree(n, k):
        prev: list[PolyForm] = []
        kept: list[PolyForm] = []
        stages = [(1, MINUS, face_candidates(n, k, 1, MINUS, f))] if family == FULL else []
        stages += [(q, family, by_face[q - 1][f].span if f in by_face[q - 1] else [])
                   for q in range(1, len(bases) + 1)]
        for q, fam, cands in stages:
            traces = [trace(c, f) for c in cands]
            chosen = [cands[i] for i in _select(prev, traces)]
            prev.extend(trace(c, f) for c in chosen)
            if len(f) == n + 1 and chosen:
                chosen = _gram_schmidt(chosen, kept)
                kept.extend(chosen)
            start = len(forms)
            forms.extend(chosen)
            out_blocks.append(Block(f, q, fam, start, len(forms)))
        # a non-nested sequence leaves more traces than the top space holds
        last = by_face[-1].get(f)
        if len(prev) != (len(last.span) if last is not None else 0):
            raise ValueError("supplied sequence not nested")
    return _SequenceBasis(n, k, len(bases), forms, out_blocks, family)


class _SequenceBasis(PHierarchicalBasis):
    """Hierarchical basis for a single family built by :func:`hierarchize`."""

    def __init__(self, n, k, max_order, forms, blocks, family):
        super().__init__(n, k, max_order, forms, blocks)
        self.family = family

    def _stage_limit(self, order: int, family: str) -> int:
        if family != self.family:
            raise ValueError(f"basis was built for the {self.family} family")
        if order > self.max_order:
            raise ValueError(f"order {order} beyond built range {self.max_order}")
        return order + (1 if self.family == FULL else 0)

    def count(self, f, order, family):
        return sum(len(r) for r in self.basis_indices(f, order, family))

    def basis_indices(self, f, order, family):
        f = tuple(f)
        limit = self._stage_limit(order, family)
        blocks = self.face_blocks(f)
        if not blocks or order < 1:
            return []
        used = blocks[:limit]
        start, stop = used[0].start, used[-1].stop
        return [range(start, stop)] if stop > start else []


def recombine(basis: PHierarchicalBasis, seed: int = 0) -> PHierarchicalBasis:
    """Another valid hierarchical basis of the same spaces.

    Each block past the Whitney block is replaced by an invertible rational
    combination of itself plus multiples of the earlier blocks of its face.
    The coefficients depend only on the face dimension and the stage, so
    traces seen from neighbouring cells stay consistent.
    """
    rng = random.Random(seed)
    coeffs: dict = {}
    forms = list(basis.forms)
    for f in basis.faces:
        blocks = basis.face_blocks(f)
        for bi, b in enumerate(blocks):
            if bi == 0:
                continue
            key = (len(f), b.order, b.family, len(b))
            if key not in coeffs:
                m = len(b)
                # unit upper triangular, hence invertible
                tri = [[Fraction(1) if i == j else (Fraction(rng.randint(-1, 1), 2) if j > i else 0)
                        for j in range(m)] for i in range(m)]
                earlier = sum(len(x) for x in blocks[:bi])
                mix = [[Fraction(rng.randint(-1, 1), 4) for _ in range(earlier)] for _ in range(m)]
                coeffs[key] = (tri, mix)
            tri, mix = coeffs[key]
            prev = [basis.forms[i] for x in blocks[:bi] for i in range(x.start, x.stop)]
            if any(len(row) != len(prev) for row in mix):
                raise ValueError("faces of equal dimension have different block layouts")
            own = [basis.forms[i] for i in range(b.start, b.stop)]
            for i in range(len(b)):
                w = PolyForm(basis.n, basis.k)
                for j, c in enumerate(tri[i]):
                    if c:
                        w = w + own[j] * c
                for j, c in enumerate(mix[i]):
                    if c:
                        w = w + prev[j] * c
                forms[b.start + i] = w
    return PHierarchicalBasis(basis.n, basis.k, basis.max_order, forms, list(basis.blocks))


# registry and disk cache

_registry: dict = {}
_registry_lock = threading.Lock()


def schema_hash() -> str:
    src = f"{SCHEMA_VERSION}:{stage_chain(3)}:{FAMILIES}"
    return hashlib.sha256(src.encode()).hexdigest()[:16]


def cache_dir() -> Path | None:
    d = os.environ.get("HPFEEC_CACHE_DIR")
    return Path(d) if d else None


def _cache_file(directory: Path, n: int, k: int, order: int) -> Path:
    return directory / f"basis_n{n}_k{k}_r{order}_{schema_hash()}.pkl"


def build_hierarchical(n: int, k: int, max_order: int) -> PHierarchicalBasis:
    """Build the interleaved p-hierarchical basis up to ``(max_order, full)``."""
    if not (0 <= k <= n) or max_order < 1:
        raise ValueError("need 0 <= k <= n and max_order >= 1")
    forms, blocks = _chain_blocks(n, k, stage_chain(max_order))
    return PHierarchicalBasis(n, k, max_order, forms, blocks)


def dump_basis(basis: PHierarchicalBasis, path: Path) -> None:
    payload = {
        "schema": schema_hash(),
        "n": basis.n, "k": basis.k, "max_order": basis.max_order,
        "forms": [{s: dict(p.terms) for s, p in w.comps.items()} for w in basis.forms],
        "blocks": [(b.f, b.order, b.family, b.start, b.stop) for b in basis.blocks],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_basis(path: Path) -> PHierarchicalBasis | None:
    try:
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
    except (OSError, pickle.UnpicklingError, EOFError):
        return None
    if payload.get("schema") != schema_hash():
        return None
    n, k = payload["n"], payload["k"]
    forms = [PolyForm(n, k, {s: Polynomial(n, t) for s, t in comps.items()})
             for comps in payload["forms"]]
    blocks = [Block(tuple(f), q, fam, a, b) for f, q, fam, a, b in payload["blocks"]]
    return PHierarchicalBasis(n, k, payload["max_order"], forms, blocks)


def get_basis(n: int, k: int, order: int) -> PHierarchicalBasis:
    """Cached p-hierarchical basis covering at least ``order``.

    The cached object is only ever replaced by a larger one, so callers that
    keep a reference see stable indices.
    """
    with _registry_lock:
        hit = _registry.get((n, k))
        if hit is not None and hit.max_order >= order:
            return hit
        target = max(order, hit.max_order + 1 if hit else order)
        basis = None
        d = cache_dir()
        if d is not None:
            basis = load_basis(_cache_file(d, n, k, target))
        if basis is None:
            basis = build_hierarchical(n, k, target)
            if d is not None:
                dump_basis(basis, _cache_file(d, n, k, target))
        _registry[(n, k)] = basis
        return basis


@dataclass
class TraceMatrix:
    """Coefficients of traces on ``f`` in the standalone basis of the face simplex.

    ``matrix[i][j]`` is the coefficient of standalone form ``j`` in the trace
    of cell form ``rows[i]``.
    """

    f: tuple
    rows: list
    cols: list
    matrix: list


def trace_matrix(basis: PHierarchicalBasis, f: Sequence[int], order: int, family: str) -> TraceMatrix:
    """Trace map from the forms of ``f`` and its subfaces onto the face simplex."""
    f = tuple(f)
    d = len(f) - 1
    local = build_hierarchical(d, basis.k, basis.max_order) if d > 0 or basis.k == 0 else None
    rows = []
    for g in basis.faces:
        if set(g) <= set(f):
            for rg in basis.basis_indices(g, order, family):
                rows.extend(rg)
    if local is None:
        return TraceMatrix(f, rows, [], [])
    cols = []
    for g in local.faces:
        for rg in local.basis_indices(g, order, family):
            cols.extend(rg)
    col_forms = [local.forms[j] for j in cols]
    deg = max([w.degree for w in col_forms] + [0])
    a = [form_vector(w, deg) for w in col_forms]
    at = [list(r) for r in zip(*a)]
    mat = []
    for i in rows:
        t = form_vector(trace(basis.forms[i], f), deg)
        # least squares is exact here because the trace lies in the span
        gram = [[sum(x * y for x, y in zip(u, v)) for v in a] for u in a]
        rhs = [sum(x * y for x, y in zip(u, t)) for u in a]
        coef = exact.solve(gram, rhs)
        recon = [sum(c * at[m][j] for j, c in enumerate(coef)) for m in range(len(t))]
        if any(x != y for x, y in zip(recon, t)):
            raise RuntimeError("trace not in the face space")
        mat.append(coef)
    return TraceMatrix(f, rows, cols, mat)
