"""Global spaces on hierarchical meshes and sparse assembly.

A global basis function is a reference basis form of some cell ``C`` in the
hierarchy, attached to an existing face ``s`` of ``C``. On a leaf cell ``L``
the functions seen are those of every ancestor ``C`` of ``L`` (``L``
included) attached to the *leaf* faces of ``C``. The Whitney block of a
refined face is dropped (quasi-hierarchical variant) or kept together with a
signed zero-mean constraint on its children (hierarchical variant).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import factorial
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import exact
from .basis import FULL, MINUS, PHierarchicalBasis, get_basis, whitney_form
from .mesh import HierComplex, Key
from .polyform import AffineMap, PolyForm, pullback
from .quadrature import rule_for_degree
from .simplex import wedge_indices

QUASI = "quasi"
HIERARCHICAL = "hierarchical"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("HPFEEC_THREADS", "1")))
    except ValueError:
        return 1


# orders

def _lookup(requested, key: Key, hc: HierComplex) -> int:
    if isinstance(requested, int):
        return requested
    if callable(requested):
        return int(requested(key))
    for anc in hc.cell_ancestry(key):
        if anc in requested:
            return int(requested[anc])
    raise ValueError(f"no order requested for cell {key} or any of its ancestors")


def order_defining_cells(hc: HierComplex, mode: str = "hierarchical") -> dict:
    """Map each leaf cell to its order-defining ancestor.

    In ``root`` mode this is the root cell. In ``hierarchical`` mode it is
    the topmost ancestor that has at least one leaf face of positive
    dimension (vertices always carry order one and are ignored).
    """
    out = {}
    for leaf in hc.leaf_cells():
        anc = hc.cell_ancestry(leaf)
        if mode == "root":
            out[leaf] = anc[-1]
            continue
        chosen = leaf
        for c in reversed(anc):
            if any(len(f[1]) > 1 and hc.is_leaf(f) for f in hc.faces_of(c)):
                chosen = c
                break
        out[leaf] = chosen
    return out


@dataclass
class OrderDistribution:
    """Orders of order-defining cells and resolved orders of leaf subsimplices."""

    mode: str
    cell_order: dict
    defining: dict
    sub_order: dict

    def leaf_cell_order(self, leaf: Key) -> int:
        return self.cell_order[self.defining[leaf]]

    def max_order(self) -> int:
        return max(self.cell_order.values())


def resolve_orders(hc: HierComplex, requested, mode: str = "hierarchical") -> OrderDistribution:
    """Apply the minimum rule.

    Parameters
    ----------
    requested : int, dict or callable
        Orders of cells. A dict may give orders for any ancestor; the nearest
        ancestor's entry applies.
    mode : {"root", "hierarchical"}
    """
    if mode not in ("root", "hierarchical"):
        raise ValueError(f"unknown mode {mode!r}")
    defining = order_defining_cells(hc, mode)
    cell_order = {}
    for d in sorted(set(defining.values())):
        r = _lookup(requested, d, hc)
        if r < 1:
            raise ValueError("orders must be >= 1")
        cell_order[d] = r
    sub: dict = {}
    for leaf, d in defining.items():
        r = cell_order[d]
        for c in hc.cell_ancestry(leaf):
            for f in hc.faces_of(c):
                if hc.exists(f):
                    sub[f] = min(sub.get(f, r), r)
    for f in sub:
        if len(f[1]) == 1:
            sub[f] = 1
    return OrderDistribution(mode, cell_order, defining, sub)


# spaces

def _local_face(c: Key, f: Key) -> tuple:
    pos = {lab: i for i, lab in enumerate(c[1])}
    return tuple(pos[lab] for lab in f[1])


def _minors(mat: np.ndarray, k: int) -> np.ndarray:
    n = mat.shape[0]
    idx = wedge_indices(k, n)
    out = np.empty((len(idx), len(idx)))
    for a, s in enumerate(idx):
        for b, t in enumerate(idx):
            out[a, b] = np.linalg.det(mat[np.ix_(s, t)]) if k else 1.0
    return out


@dataclass
class CellDofs:
    dofs: np.ndarray  # global (unconstrained) dof ids
    anc: list  # per ancestor: (ancestor key, local basis indices, positions in dofs)
    order: int


class Space:
    """Global ``k``-form space of one family on the current leaf complex.

    Parameters
    ----------
    hc : HierComplex
    orders : OrderDistribution
    k : int
    family : {"minus", "full"}
    variant : {"quasi", "hierarchical"}
    basis : PHierarchicalBasis, optional
        Reference basis to use instead of the cached one.
    """

    def __init__(self, hc: HierComplex, orders: OrderDistribution, k: int, family: str,
                 variant: str = QUASI, basis: PHierarchicalBasis | None = None):
        if variant not in (QUASI, HIERARCHICAL):
            raise ValueError(f"unknown variant {variant!r}")
        self.hc, self.orders, self.k, self.family, self.variant = hc, orders, k, family, variant
        self.n = hc.n
        rmax = orders.max_order()
        if basis is not None and (basis.n, basis.k) != (self.n, k):
            raise ValueError("basis does not match the space dimensions")
        if basis is not None and basis.max_order < rmax:
            raise ValueError("basis does not cover the requested orders")
        self.basis: PHierarchicalBasis = basis or get_basis(self.n, k, max(rmax, 1))
        self.leaves = hc.leaf_cells()
        keyset: dict = {}
        plan = {}
        for leaf in self.leaves:
            entries = []
            for c in hc.cell_ancestry(leaf):
                for f in hc.faces_of(c):
                    if len(f[1]) - 1 < k or not hc.exists(f):
                        continue
                    local = _local_face(c, f)
                    if f not in hc.refined:
                        idx = self.basis.indices({local: orders.sub_order[f]}, family)
                    elif variant == HIERARCHICAL and len(f[1]) == k + 1:
                        idx = self.basis.indices({local: 1}, MINUS)
                    else:
                        continue
                    for j, li in enumerate(idx):
                        keyset[(f, j)] = None
                        entries.append((c, li, (f, j)))
            plan[leaf] = entries
        self.dof_keys = sorted(keyset)
        self.index = {key: i for i, key in enumerate(self.dof_keys)}
        self.cells: dict = {}
        for leaf, entries in plan.items():
            dofs = np.array([self.index[e[2]] for e in entries], dtype=int)
            groups: dict = {}
            for pos, (c, li, _) in enumerate(entries):
                g = groups.setdefault(c, ([], []))
                g[0].append(li)
                g[1].append(pos)
            anc = [(c, np.array(v[0], dtype=int), np.array(v[1], dtype=int)) for c, v in groups.items()]
            self.cells[leaf] = CellDofs(dofs, anc, orders.leaf_cell_order(leaf))
        self.ndof = len(self.dof_keys)
        self._prolong = None

    @property
    def ncomp(self) -> int:
        return len(wedge_indices(self.k, self.n))

    def dofs_of(self, key: Key) -> list[int]:
        out = []
        j = 0
        while (key, j) in self.index:
            out.append(self.index[(key, j)])
            j += 1
        return out

    # geometry helpers
    def _ancestor_map(self, leaf: Key, c: Key):
        if c == leaf:
            return None
        jac, b = self.hc.local_map(leaf, c)
        return np.array(jac, dtype=float).reshape(self.n, self.n), np.array(b, dtype=float)

    def evaluate(self, leaf: Key, ref_points: np.ndarray, derivative: bool = False) -> np.ndarray:
        """Physical components of all functions seen by ``leaf``.

        Returns an array ``(ndofs_on_leaf, C(n, k[+1]), npoints)``.
        """
        cd = self.cells[leaf]
        kk = self.k + 1 if derivative else self.k
        ncomp = len(wedge_indices(kk, self.n))
        out = np.zeros((len(cd.dofs), ncomp, ref_points.shape[0]))
        if derivative and kk > self.n:
            return out
        compiled = self.basis.compiled_d if derivative else self.basis.compiled
        for c, li, pos in cd.anc:
            amap = self._ancestor_map(leaf, c)
            pts = ref_points if amap is None else ref_points @ amap[0].T + amap[1]
            vals = compiled.evaluate(pts, li)
            jinv = np.linalg.inv(self.hc.jacobian(c))
            mk = _minors(jinv, kk)
            out[pos] = np.einsum("bsq,st->btq", vals, mk)
        return out

    # constraints
    def prolongation(self) -> sp.csr_matrix:
        """Matrix ``P`` with full dofs ``= P @ free dofs``."""
        if self._prolong is not None:
            return self._prolong
        if self.variant == QUASI:
            self._prolong = sp.identity(self.ndof, format="csr")
            return self._prolong
        slave: dict = {}
        for s in sorted(self.hc.refined):
            if len(s[1]) != self.k + 1:
                continue
            kids = self.hc.children(s)
            signs = [relative_orientation(self.hc, mu, s) for mu in kids]
            ids = [self.index[(mu, 0)] for mu in kids]
            # first child is expressed through the others
            slave[ids[0]] = [(ids[i], -signs[i] * signs[0]) for i in range(1, len(ids))]
        free = [i for i in range(self.ndof) if i not in slave]
        col = {d: j for j, d in enumerate(free)}
        rows, cols, vals = [], [], []
        for d in free:
            rows.append(d)
            cols.append(col[d])
            vals.append(1.0)
        for d, terms in slave.items():
            for other, c in terms:
                if other in slave:
                    raise ValueError("dangling constraint chain")
                rows.append(d)
                cols.append(col[other])
                vals.append(float(c))
        self._prolong = sp.csr_matrix((vals, (rows, cols)), shape=(self.ndof, len(free)))
        return self._prolong

    @property
    def nfree(self) -> int:
        return self.prolongation().shape[1]


def relative_orientation(hc: HierComplex, inner: Key, outer: Key) -> int:
    """Sign of the ascending-order orientation of ``inner`` relative to ``outer`` (same dimension)."""
    jac, _ = hc.local_map(inner, outer)
    d = exact.det(jac)
    return 1 if d > 0 else -1


# quadrature per cell

def cell_rule(order: int, n: int, extra: int = 2):
    """Rule exact for products of two order-``order`` forms plus ``extra`` degrees."""
    return rule_for_degree(n, 2 * order + extra)


@dataclass
class CellGeometry:
    key: Key
    x0: np.ndarray
    jac: np.ndarray
    det: float
    ref_points: np.ndarray
    weights: np.ndarray  # physical weights
    points: np.ndarray  # physical points


def cell_geometry(hc: HierComplex, leaf: Key, rule) -> CellGeometry:
    x = hc.coords(leaf)
    jac = (x[1:] - x[0]).T
    det = float(np.linalg.det(jac))
    refp = rule.ref_points
    return CellGeometry(leaf, x[0], jac, det, refp, rule.float_weights * abs(det), refp @ jac.T + x[0])


# boundary facets

@dataclass
class Facet:
    cell: Key
    local: int  # index of the opposite vertex in the cell
    sign: int  # +1 when ascending facet order is outward oriented
    ref_points: np.ndarray  # points in the cell reference coordinates
    weights: np.ndarray  # physical surface weights
    points: np.ndarray
    normal: np.ndarray  # outward unit normal
    tangents: np.ndarray  # (n, n-1) ascending-order edge vectors
    root_facet: tuple


def boundary_facets(hc: HierComplex, degree: int, select: Callable | None = None) -> list[Facet]:
    """Boundary facets of leaf cells with quadrature data.

    The orientation sign is ``(-1)**i`` times the cell orientation flag for
    the facet opposite local vertex ``i``.
    """
    n = hc.n
    out = []
    if n == 1:
        fref = np.zeros((1, 0))
        fw = np.ones(1)
    else:
        rule = rule_for_degree(n - 1, degree)
        fref, fw = rule.ref_points, rule.float_weights
    verts = np.vstack([np.zeros(n), np.eye(n)])
    for leaf in hc.leaf_cells():
        flag = hc.orientation(leaf)
        x = hc.coords(leaf)
        for i in range(n + 1):
            facet = leaf[1][:i] + leaf[1][i + 1:]
            fkey = (leaf[0], facet)
            if not hc.on_boundary(fkey):
                continue
            loc = [j for j in range(n + 1) if j != i]
            vref = verts[loc]
            refp = vref[0] + fref @ (vref[1:] - vref[0])
            xf = x[loc]
            tang = (xf[1:] - xf[0]).T
            pts = xf[0] + fref @ tang.T
            if n == 1:
                meas = 1.0
            else:
                meas = float(np.sqrt(abs(np.linalg.det(tang.T @ tang))))
            inward = x[i] - xf[0]
            if n == 1:
                normal = -np.sign(inward)
            else:
                q, _ = np.linalg.qr(np.hstack([tang, inward[:, None]]))
                normal = q[:, -1]
                if normal @ inward > 0:
                    normal = -normal
            sign = (-1) ** i * flag
            if select is not None and not select(pts.mean(axis=0), normal):
                continue
            out.append(Facet(leaf, i, sign, refp, fw * meas, pts, normal, tang,
                             hc.boundary_facet_of(fkey)))
    return out


def facet_trace(values: np.ndarray, facet: Facet, k: int) -> np.ndarray:
    """Trace density of physical ``k``-form values on an outward-oriented facet.

    ``values`` has shape ``(nb, C(n,k), nq)``; the result is
    ``(nb, C(n-1,k), nq)`` in components relative to the unit-measure,
    outward-oriented tangent frame of the facet.
    """
    n = facet.tangents.shape[0]
    tang = facet.tangents
    if n > 1:
        # orthonormal frame with the orientation of the (signed) ascending frame
        q, r = np.linalg.qr(tang)
        q = q * np.sign(np.diag(r))
        if facet.sign < 0:
            q[:, 0] = -q[:, 0]
    else:
        q = np.zeros((1, 0))
    rows = wedge_indices(k, n)
    cols = wedge_indices(k, n - 1)
    m = np.empty((len(rows), len(cols)))
    for a, s in enumerate(rows):
        for b, t in enumerate(cols):
            m[a, b] = np.linalg.det(q[np.ix_(s, t)]) if k else 1.0
    out = np.einsum("bsq,st->btq", values, m)
    if n == 1 and k == 0:
        out = out * facet.sign
    return out


def boundary_terms(hc: HierComplex, space: Space, func: Callable, select: Callable | None = None,
                   degree_extra: int = 4) -> np.ndarray:
    """Load vector ``int_{boundary} <func, Tr v>`` over selected boundary facets.

    ``func(points, facet)`` returns trace components, shape ``(C(n-1,k), m)``,
    relative to the outward-oriented orthonormal facet frame.
    """
    out = np.zeros(space.ndof)
    for facet, vals in facet_values(hc, space, degree_extra, select):
        tr = facet_trace(vals, facet, space.k)
        data = np.asarray(func(facet.points, facet)).reshape(tr.shape[1], -1)
        np.add.at(out, space.cells[facet.cell].dofs, np.einsum("bsq,sq,q->b", tr, data, facet.weights))
    return out


def facet_values(hc: HierComplex, space: Space, degree_extra: int = 4, select: Callable | None = None):
    """Yield ``(facet, values)`` with local basis values at the facet quadrature points."""
    rmax = max(c.order for c in space.cells.values())
    for facet in boundary_facets(hc, 2 * rmax + degree_extra, select):
        yield facet, space.evaluate(facet.cell, facet.ref_points)


def _trace_operator(hc: HierComplex, space: Space, select, dof_values, data, degree_extra: int):
    """Boundary sampling operator (reduced numbering), quadrature weights and data samples."""
    rows, cols, vals, rhs_parts, wts = [], [], [], [], []
    nrow = 0
    for facet, v in facet_values(hc, space, degree_extra, select):
        q = dof_values(v, facet)
        nb, nc, nq = q.shape
        rows.append(np.tile(nrow + np.arange(nc * nq), nb))
        cols.append(np.repeat(space.cells[facet.cell].dofs, nc * nq))
        vals.append(q.reshape(nb, nc * nq).ravel())
        wts.append(np.tile(facet.weights, nc))
        if data is not None:
            rhs_parts.append(np.asarray(data(facet.points, facet), dtype=float).reshape(nc, nq).ravel())
        nrow += nc * nq
    if nrow == 0:
        raise ValueError("no boundary facets matched the selection")
    t = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nrow, space.ndof)) @ space.prolongation()
    return sp.csc_matrix(t), np.concatenate(wts), (np.concatenate(rhs_parts) if rhs_parts else None)


def _influenced(t: sp.csc_matrix, tol: float) -> np.ndarray:
    norms = np.asarray(abs(t).max(axis=0).todense()).ravel()
    return np.flatnonzero(norms > tol * max(norms.max(), 1e-300))


def trace_projection(hc: HierComplex, space: Space, select: Callable, dof_values: Callable,
                     data: Callable, degree_extra: int = 4, tol: float = 1e-11):
    """Boundary L2 projection of prescribed trace data onto the influencing DOFs.

    Parameters
    ----------
    dof_values : callable
        ``dof_values(vals, facet)`` maps local basis values ``(nb, C(n,k), m)``
        to the constrained quantity, shape ``(nb, c, m)``.
    data : callable
        ``data(points, facet)`` returns the prescribed quantity, ``(c, m)``.

    Returns
    -------
    idx : ndarray
        Influenced indices in the constraint-reduced numbering.
    values : ndarray
        Their projected coefficients.
    """
    t, w, rhs = _trace_operator(hc, space, select, dof_values, data, degree_extra)
    idx = _influenced(t, tol)
    td = t[:, idx].toarray()
    gram = td.T @ (w[:, None] * td)
    diag = np.diag(gram)
    if diag.size == 0 or diag.min() <= 0:
        raise np.linalg.LinAlgError("boundary Gram matrix is singular")
    # facets of very different sizes make the raw Gram badly scaled
    sc = 1.0 / np.sqrt(diag)
    gram = sc[:, None] * gram * sc[None, :]
    ev = np.linalg.eigvalsh(gram)
    if ev.min() <= 1e-12 * ev.max():
        raise np.linalg.LinAlgError("boundary Gram matrix is singular")
    return idx, sc * np.linalg.solve(gram, sc * (td.T @ (w * rhs)))


def trace_dofs(hc: HierComplex, space: Space, select: Callable | None = None, tol: float = 1e-11) -> np.ndarray:
    """Reduced indices of the DOFs with a nonzero trace on the selected boundary."""
    if space.k >= hc.n:
        return np.zeros(0, dtype=int)
    t, _, _ = _trace_operator(hc, space, select, lambda v, f: facet_trace(v, f, space.k), None, 2)
    return _influenced(t, tol)


def impose_trace_bc(a: sp.spmatrix, b: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    """Eliminate prescribed unknowns from ``a x = b``.

    Returns ``(a_ff, b_f, free)``; the full solution is recovered by
    ``x[free] = solve(a_ff, b_f)`` and ``x[fixed] = values``.
    """
    a = sp.csr_matrix(a)
    fixed = np.asarray(fixed, dtype=int)
    mask = np.ones(a.shape[0], dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    b_f = b[free] - a[free][:, fixed] @ np.asarray(values, dtype=float)
    return a[free][:, free].tocsc(), b_f, free


# block systems

@dataclass
class BlockSystem:
    """Sparse block system with per-field prolongations (constraints)."""

    fields: list
    sizes: list
    blocks: dict = field(default_factory=dict)
    rhs: list = field(default_factory=list)
    prolongations: list = field(default_factory=list)

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def matrix(self) -> sp.csr_matrix:
        nf = len(self.fields)
        grid = [[self.blocks.get((i, j)) for j in range(nf)] for i in range(nf)]
        for i in range(nf):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((self.sizes[i], self.sizes[i]))
        return sp.bmat(grid, format="csr")

    def vector(self) -> np.ndarray:
        return np.concatenate(self.rhs)

    def reduced(self):
        """Constraint-reduced matrix and right-hand side ``(P^T A P, P^T b, P)``."""
        p = sp.block_diag(self.prolongations, format="csr")
        a = self.matrix()
        return (p.T @ a @ p).tocsr(), p.T @ self.vector(), p

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        off = self.offsets()
        return [x[off[i]:off[i + 1]] for i in range(len(self.fields))]


def assemble(hc: HierComplex, spaces: Sequence[Space], integrand: Callable, degree_extra: int = 2,
             need_d: Sequence[bool] | None = None) -> BlockSystem:
    """Assemble a block system from a per-cell integrand.

    ``integrand(geom, vals, dvals)`` receives the cell geometry and lists of
    physical values (and exterior derivatives) of each space's local
    functions; it returns ``(mats, vecs)`` with ``mats[(i, j)]`` local
    matrices and ``vecs[i]`` local load vectors.
    """
    nsp = len(spaces)
    need_d = list(need_d) if need_d is not None else [True] * nsp
    leaves = spaces[0].leaves

    def work(leaf):
        order = max(s.cells[leaf].order for s in spaces)
        rule = cell_rule(order, hc.n, degree_extra)
        geom = cell_geometry(hc, leaf, rule)
        cache: dict = {}

        def ev(s, der):
            key = (id(s), der)
            if key not in cache:
                cache[key] = s.evaluate(leaf, geom.ref_points, derivative=der)
            return cache[key]

        vals = [ev(s, False) for s in spaces]
        dvals = [ev(s, True) if nd and s.k < hc.n else None for s, nd in zip(spaces, need_d)]
        return integrand(geom, vals, dvals)

    threads = thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, leaves))
    else:
        results = [work(leaf) for leaf in leaves]
    coo: dict = {}
    rhs = [np.zeros(s.ndof) for s in spaces]
    for leaf, (mats, vecs) in zip(leaves, results):
        for (i, j), m in mats.items():
            di, dj = spaces[i].cells[leaf].dofs, spaces[j].cells[leaf].dofs
            r, c, v = coo.setdefault((i, j), ([], [], []))
            r.append(np.repeat(di, len(dj)))
            c.append(np.tile(dj, len(di)))
            v.append(np.asarray(m).ravel())
        for i, vec in vecs.items():
            np.add.at(rhs[i], spaces[i].cells[leaf].dofs, vec)
    sysm = BlockSystem(list(range(nsp)), [s.ndof for s in spaces], {}, rhs,
                       [s.prolongation() for s in spaces])
    for (i, j), (r, c, v) in coo.items():
        sysm.blocks[(i, j)] = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                                            shape=(spaces[i].ndof, spaces[j].ndof))
    return sysm


def mass_integrand(geom, vals, dvals):
    v = vals[0]
    return {(0, 0): np.einsum("asq,bsq,q->ab", v, v, geom.weights)}, {}


def stiffness_integrand(geom, vals, dvals):
    v = dvals[0]
    return {(0, 0): np.einsum("asq,bsq,q->ab", v, v, geom.weights)}, {}


def load_integrand(func: Callable, k: int):
    """Mass matrix plus load vector of ``func`` (physical components, shape ``(C(n,k), m)``)."""
    def integrand(geom, vals, dvals):
        v = vals[0]
        fv = np.asarray(func(geom.points)).reshape(v.shape[1], -1)
        return ({(0, 0): np.einsum("asq,bsq,q->ab", v, v, geom.weights)},
                {0: np.einsum("asq,sq,q->a", v, fv, geom.weights)})
    return integrand


def l2_projection(hc: HierComplex, space: Space, func: Callable, degree_extra: int = 6) -> np.ndarray:
    """Galerkin L2 projection; returns full (unconstrained) coefficients."""
    sysm = assemble(hc, [space], load_integrand(func, space.k), degree_extra, need_d=[False])
    a, b, p = sysm.reduced()
    from scipy.sparse.linalg import spsolve
    x = spsolve(a.tocsc(), b)
    return p @ np.atleast_1d(x)


def evaluate_field(space: Space, coef: np.ndarray, leaf: Key, ref_points: np.ndarray,
                   derivative: bool = False) -> np.ndarray:
    """Physical components ``(C(n,k), m)`` of a discrete field on a leaf cell."""
    vals = space.evaluate(leaf, ref_points, derivative)
    return np.einsum("b,bsq->sq", coef[space.cells[leaf].dofs], vals)


def locate(hc: HierComplex, x: np.ndarray, tol: float = 1e-12):
    """Leaf cell containing ``x`` and the reference coordinates, or ``None``."""
    x = np.asarray(x, dtype=float)
    for leaf in hc.leaf_cells():
        xs = hc.coords(leaf)
        jac = (xs[1:] - xs[0]).T
        ref = np.linalg.solve(jac, x - xs[0])
        if ref.min() >= -tol and ref.sum() <= 1 + tol:
            return leaf, ref
    return None


def l2_error(hc: HierComplex, space: Space, coef: np.ndarray, exact_fn: Callable,
             degree: int | None = None, derivative: bool = False) -> float:
    """L2 norm of the difference to ``exact_fn`` (physical components)."""
    total = 0.0
    for leaf in space.leaves:
        deg = degree if degree is not None else 2 * space.cells[leaf].order + 8
        rule = rule_for_degree(hc.n, deg)
        geom = cell_geometry(hc, leaf, rule)
        uh = evaluate_field(space, coef, leaf, geom.ref_points, derivative)
        ue = np.asarray(exact_fn(geom.points)).reshape(uh.shape)
        total += float(np.einsum("sq,q->", (uh - ue) ** 2, geom.weights))
    return total ** 0.5


# refinement equation

@dataclass
class ConstraintSet:
    """Refinement relation of the Whitney function of a refined subsimplex.

    ``fine`` maps fine ``k``-subsimplices to coefficients ``c`` with
    ``phi_coarse = sum c * phi_fine`` on the refined star. ``signs`` holds the
    orientation of each child of the coarse subsimplex; in the hierarchical
    variant admissible child coefficients satisfy ``sum(sign * c) == 0``.
    """

    coarse: Key
    variant: str
    fine: dict
    signs: dict

    def hierarchical_split(self, coeffs: dict) -> tuple[Fraction, dict]:
        """Split fine child coefficients into a coarse part and a zero-mean remainder."""
        kids = sorted(self.signs)
        base = {mu: self.fine[mu] for mu in kids}
        # coarse coefficient a and remainder b with sum(sign*b)=0:
        # coeffs[mu] = a*base[mu] + b[mu]
        num = sum(self.signs[mu] * coeffs.get(mu, 0) for mu in kids)
        den = sum(self.signs[mu] * base[mu] for mu in kids)
        a = Fraction(num) / Fraction(den)
        return a, {mu: coeffs.get(mu, 0) - a * base[mu] for mu in kids}


def coarse_whitney(hc: HierComplex, s: Key, cell: Key) -> PolyForm:
    """Whitney form of ``s`` in the reference coordinates of ``cell``."""
    return whitney_form(hc.n, _local_face(cell, s))


def refinement_constraints(hc: HierComplex, s: Key, variant: str = QUASI) -> ConstraintSet:
    """Refinement equation coefficients for the refined ``k``-subsimplex ``s`` (exact)."""
    if s not in hc.refined:
        raise ValueError(f"{s} is not refined")
    k = len(s[1]) - 1
    fine: dict = {}
    for c in sorted(hc.cofaces[s]):
        whitney = coarse_whitney(hc, s, c)
        for x in hc.children(c):
            jac, b = hc.local_map(x, c)
            local = pullback(whitney, AffineMap(jac, b))
            for g in combinations(range(hc.n + 1), k + 1):
                gkey = (x[0], tuple(x[1][i] for i in g))
                val = _face_integral(local, g) * factorial(k)
                if gkey in fine:
                    if fine[gkey] != val:
                        raise RuntimeError("inconsistent refinement coefficients")
                elif val != 0:
                    fine[gkey] = val
    signs = {}
    for mu in hc.children(s):
        signs[mu] = relative_orientation(hc, mu, s)
        fine.setdefault(mu, Fraction(0))
    return ConstraintSet(s, variant, fine, signs)


def _face_integral(form: PolyForm, face: Sequence[int]):
    from .polyform import trace
    t = trace(form, face)
    if t.k == 0 and t.n == 0:
        return t.component(()).terms.get((), 0)
    return t.integrate()


def cell_whitney_expansion(hc: HierComplex, cs: ConstraintSet, x: Key) -> PolyForm:
    """``sum c_g phi_g`` restricted to the fine cell ``x`` (reference coordinates of ``x``)."""
    k = len(cs.coarse[1]) - 1
    out = PolyForm(hc.n, k)
    for g in combinations(range(hc.n + 1), k + 1):
        gkey = (x[0], tuple(x[1][i] for i in g))
        c = cs.fine.get(gkey, 0)
        if c:
            out = out + whitney_form(hc.n, g) * c
    return out


def element_matrix(coords: np.ndarray, k: int, order: int, family: str = MINUS,
                   form: str = "mass") -> np.ndarray:
    """Element matrix of one cell (no hierarchy) for ``form`` in {"mass", "stiffness"}.

    Uses all basis functions of the given order, in canonical basis order.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0] - 1
    basis = get_basis(n, k, order)
    idx = []
    for f in basis.faces:
        for rg in basis.basis_indices(f, order, family):
            idx.extend(rg)
    idx = np.array(idx, dtype=int)
    jac = (coords[1:] - coords[0]).T
    rule = cell_rule(order, n)
    kk = k + 1 if form == "stiffness" else k
    if kk > n:
        return np.zeros((len(idx), len(idx)))
    compiled = basis.compiled_d if form == "stiffness" else basis.compiled
    vals = compiled.evaluate(rule.ref_points, idx)
    mk = _minors(np.linalg.inv(jac), kk)
    phys = np.einsum("bsq,st->btq", vals, mk)
    w = rule.float_weights * abs(np.linalg.det(jac))
    return np.einsum("asq,bsq,q->ab", phys, phys, w)


def export_coo(mat: sp.spmatrix, path) -> None:
    """Write a sparse matrix as ``row col value`` text lines."""
    m = sp.coo_matrix(mat)
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row, m.col, m.data):
            fh.write(f"{r} {c} {v:.17g}\n")
