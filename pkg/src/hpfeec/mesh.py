"""Hierarchical simplicial meshes refined by (incomplete) Freudenthal subdivision.

Vertices are identified by labels ``(roots, mult)``: the ascending root
vertex ids of the smallest root subsimplex containing the vertex, and integer
barycentric weights normalized by their gcd. A subsimplex at refinement level
``l`` is the key ``(l, labels)`` with labels sorted ascending.

Refining a subsimplex ``P`` marks ``P`` and all same-level subsimplices that
contain it as refined. Refining a subsimplex creates the fine subsimplices of
its Freudenthal subdivision that lie in its relative interior; their *host*
is ``P``. A subsimplex exists if it is a root subsimplex or its host is
refined, and it is a leaf if it exists and is not refined.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, permutations
from math import gcd, log2
from typing import Iterable, Sequence

import numpy as np

from . import exact
from .simplex import sort_with_parity

Label = tuple  # ((root ids ascending), (multiplicities))
Key = tuple  # (level, (labels ascending))


class StateError(RuntimeError):
    """Operation not allowed in the current refinement state."""


# vertex labels

def root_label(v: int) -> Label:
    return ((v,), (1,))


def normalize_label(roots: Sequence[int], mult: Sequence[int]) -> Label:
    pairs = sorted((r, m) for r, m in zip(roots, mult) if m)
    g = 0
    for _, m in pairs:
        g = gcd(g, m)
    return tuple(r for r, _ in pairs), tuple(m // g for _, m in pairs)


def midpoint(a: Label, b: Label) -> Label:
    """Label of the midpoint of two labelled vertices."""
    sa, sb = sum(a[1]), sum(b[1])
    w: dict = {}
    for r, m in zip(*a):
        w[r] = w.get(r, 0) + m * sb
    for r, m in zip(*b):
        w[r] = w.get(r, 0) + m * sa
    return normalize_label(list(w), list(w.values()))


def vertex_depth(label: Label) -> int:
    """Refinement depth ``log2(sum(mult)) + 1``."""
    s = sum(label[1])
    if s & (s - 1):
        raise ValueError(f"label {label} has a multiplicity sum that is not a power of two")
    return int(log2(s)) + 1


def label_bary(label: Label, frame: Sequence[int]) -> list[Fraction]:
    """Barycentric coordinates of a label w.r.t. root vertices ``frame``."""
    s = sum(label[1])
    pos = {v: i for i, v in enumerate(frame)}
    out = [Fraction(0)] * len(frame)
    for r, m in zip(*label):
        if r not in pos:
            raise ValueError(f"label {label} not inside frame {tuple(frame)}")
        out[pos[r]] = Fraction(m, s)
    return out


def label_support(labels: Iterable[Label]) -> set:
    out: set = set()
    for lab in labels:
        out.update(lab[0])
    return out


# Freudenthal patterns on an abstract ordered simplex

@lru_cache(maxsize=None)
def kuhn_children(d: int) -> tuple:
    """Children of the Freudenthal subdivision of an ordered ``d``-simplex.

    Each child is a tuple of midpoint index pairs ``(i, j)`` (``i <= j``,
    ``(i, i)`` being vertex ``i``) in Kuhn path order. Built by tiling twice
    the Kuhn simplex ``2 >= y_1 >= ... >= y_d >= 0`` with unit Kuhn simplices.
    """
    if d == 0:
        return (((0, 0),),)

    def inside(y):
        return all(0 <= c <= 2 for c in y) and all(y[i] >= y[i + 1] for i in range(d - 1))

    def pair(y):
        return (sum(1 for c in y if c == 2), sum(1 for c in y if c >= 1))

    seen = {}
    pts = [y for y in np.ndindex(*(3,) * d) if inside(y)]
    for z in pts:
        for perm in permutations(range(d)):
            path = [tuple(z)]
            cur = list(z)
            ok = True
            for p in perm:
                cur[p] += 1
                if not inside(cur):
                    ok = False
                    break
                path.append(tuple(cur))
            if ok:
                key = frozenset(path)
                if key not in seen:
                    seen[key] = tuple(pair(y) for y in path)
    kids = sorted(seen.values())
    if len(kids) != 2 ** d:
        raise RuntimeError("Kuhn construction produced a wrong child count")
    return tuple(kids)


@lru_cache(maxsize=None)
def interior_pieces(d: int) -> tuple:
    """Fine subsimplices of the subdivision lying in the open ``d``-simplex.

    Returned as sorted tuples of index pairs, grouped by nothing; the
    relative-interior test is that the pairs jointly touch every vertex.
    """
    faces = set()
    for child in kuhn_children(d):
        for m in range(1, d + 2):
            for sub in combinations(child, m):
                faces.add(tuple(sorted(sub)))
    full = set(range(d + 1))
    out = [f for f in faces if {i for p in f for i in p} == full]
    return tuple(sorted(out, key=lambda f: (len(f), f)))


def _pair_label(labels: Sequence[Label], p: tuple) -> Label:
    i, j = p
    return labels[i] if i == j else midpoint(labels[i], labels[j])


def freudenthal_children_labels(labels: Sequence[Label]) -> list[tuple]:
    """Sorted label tuples of the ``2**d`` Freudenthal children."""
    labels = tuple(sorted(labels))
    d = len(labels) - 1
    return sorted(tuple(sorted(_pair_label(labels, p) for p in child)) for child in kuhn_children(d))


def freudenthal_complete(labels: Sequence[Label]) -> list[tuple]:
    """Complete Freudenthal subdivision of a labelled simplex (list of children)."""
    return freudenthal_children_labels(labels)


def _pieces(labels: Sequence[Label]) -> list[tuple]:
    labels = tuple(sorted(labels))
    d = len(labels) - 1
    return sorted({tuple(sorted(_pair_label(labels, p) for p in f)) for f in interior_pieces(d)},
                  key=lambda t: (len(t), t))


def simplex_volume(points: Sequence[Sequence]) -> object:
    """Unsigned d-volume of a simplex given by vertex coordinates (exact if rational)."""
    p0 = points[0]
    vecs = [[a - b for a, b in zip(p, p0)] for p in points[1:]]
    d = len(vecs)
    gram = [[sum(x * y for x, y in zip(u, v)) for v in vecs] for u in vecs]
    g = exact.det(gram) if d else 1
    fact = 1
    for i in range(2, d + 1):
        fact *= i
    root = exact.exact_sqrt(g)
    return root / fact


# the hierarchical complex

@dataclass(frozen=True)
class LeafComplex:
    """Immutable snapshot of the current leaf cells."""

    n: int
    cells: tuple
    coords: np.ndarray
    orientation: np.ndarray
    levels: np.ndarray
    facet_owner: dict

    def __len__(self):
        return len(self.cells)


class HierComplex:
    """Root simplicial complex with hierarchical incomplete Freudenthal refinement.

    Parameters
    ----------
    cells : sequence of vertex-id tuples
        Root ``n``-cells. Each is sorted ascending; the permutation parity is
        kept as the orientation flag (the input is assumed positively oriented).
    coords : array, shape ``(nverts, dim)`` or ``(ncells, n+1, dim)``
        Vertex coordinates, or per-cell coordinates in the *input* vertex
        order (used for periodic meshes where a vertex has several images).
    """

    def __init__(self, cells: Sequence[Sequence[int]], coords, orientation: Sequence[int] | None = None):
        cells = [tuple(int(v) for v in c) for c in cells]
        if not cells:
            raise ValueError("empty mesh")
        self.n = len(cells[0]) - 1
        coords = np.asarray(coords, dtype=float)
        self.root_cells: list[tuple] = []
        self.root_flags: list[int] = []
        cell_xyz = []
        for ci, c in enumerate(cells):
            if len(c) != self.n + 1 or len(set(c)) != len(c):
                raise ValueError(f"bad cell {c}")
            order = sorted(range(len(c)), key=lambda i: c[i])
            asc, parity = sort_with_parity(c)
            self.root_cells.append(asc)
            xyz = coords[ci] if coords.ndim == 3 else coords[list(c)]
            cell_xyz.append(np.asarray(xyz)[order])
            self.root_flags.append(parity if orientation is None else int(orientation[ci]) * parity)
        self.cell_xyz = np.array(cell_xyz)
        self.dim = self.cell_xyz.shape[2]
        self._root_index = {c: i for i, c in enumerate(self.root_cells)}
        self.refined: set = set()
        self.host: dict = {}
        self.kids: dict = {}
        self.cofaces: dict = {}
        for c in self.root_cells:
            ckey = (0, tuple(root_label(v) for v in c))
            for m in range(1, self.n + 2):
                for sub in combinations(ckey[1], m):
                    self.cofaces.setdefault((0, sub), set()).add(ckey)
        self._boundary_sets = self._root_boundary()
        self._geom_cache: dict = {}

    # basic queries
    def exists(self, key: Key) -> bool:
        return key in self.cofaces

    def is_leaf(self, key: Key) -> bool:
        return key in self.cofaces and key not in self.refined

    def children(self, key: Key) -> list[Key]:
        """The ``2**dim`` same-dimension children of a refined subsimplex, else ``[]``."""
        if key not in self.refined:
            return []
        d = len(key[1])
        return [p for p in self.kids[key] if len(p[1]) == d]

    def pieces(self, key: Key) -> list[Key]:
        """All fine subsimplices created inside a refined subsimplex."""
        return list(self.kids.get(key, []))

    def parent(self, key: Key) -> Key | None:
        return self.host.get(key)

    def root_keys(self, dim: int | None = None) -> list[Key]:
        keys = [k for k in self.cofaces if k[0] == 0 and (dim is None or len(k[1]) == dim + 1)]
        return sorted(keys)

    def cell_key(self, i: int) -> Key:
        return (0, tuple(root_label(v) for v in self.root_cells[i]))

    def entity(self, dim: int, index: int) -> Key:
        """Root subsimplex of dimension ``dim`` with canonical index ``index``."""
        keys = self.root_keys(dim)
        if not 0 <= index < len(keys):
            raise IndexError(f"no root {dim}-subsimplex with index {index}")
        return keys[index]

    def leaf_cells(self) -> list[Key]:
        return sorted(k for k in self.cofaces if len(k[1]) == self.n + 1 and k not in self.refined)

    def existing(self, dim: int | None = None) -> list[Key]:
        return sorted(k for k in self.cofaces if dim is None or len(k[1]) == dim + 1)

    def leaves(self, dim: int | None = None) -> list[Key]:
        return [k for k in self.existing(dim) if k not in self.refined]

    def faces_of(self, cell: Key, dim: int | None = None) -> list[Key]:
        lvl, labs = cell
        dims = range(len(labs)) if dim is None else [dim]
        return [(lvl, sub) for d in dims for sub in combinations(labs, d + 1)]

    def ancestors_same_level(self, key: Key, include_self: bool = True) -> set:
        """Same-level subsimplices containing ``key`` in any cell of its star."""
        out = set()
        labs = set(key[1])
        for c in self.cofaces[key]:
            for f in self.faces_of(c):
                if labs <= set(f[1]) and (include_self or f != key):
                    out.add(f)
        return out

    def cell_ancestry(self, cell: Key) -> list[Key]:
        """``[cell, parent, grandparent, ..., root cell]``."""
        out = [cell]
        while out[-1] in self.host:
            out.append(self.host[out[-1]])
        return out

    def root_of(self, key: Key) -> int:
        """Index of a root cell whose closure contains ``key``."""
        top = key
        while top in self.host:
            top = self.host[top]
        cells = self.cofaces.get(top)
        if cells is None:
            raise KeyError(f"{key} does not exist")
        return self._root_index[tuple(lab[0][0] for lab in min(cells)[1])]

    # refinement
    def refine(self, key: Key) -> set:
        """Incomplete Freudenthal refinement of the leaf subsimplex ``key``.

        Returns the set of fine subsimplices created.
        """
        if not self.exists(key):
            raise StateError(f"{key} does not exist")
        if key in self.refined:
            raise StateError(f"{key} is already refined")
        todo = sorted(self.ancestors_same_level(key, include_self=True))
        created: set = set()
        touched_cells: set = set()
        for p in todo:
            if p in self.refined:
                continue
            if not self.exists(p):
                raise StateError(f"closure violated: ancestor {p} missing")
            self.refined.add(p)
            lvl = p[0] + 1
            pcs = [(lvl, labs) for labs in _pieces(p[1])]
            self.kids[p] = pcs
            for q in pcs:
                self.host[q] = p
                self.cofaces[q] = set()
            created.update(pcs)
            touched_cells.update(self.cofaces[p])
        for c in sorted(touched_cells):
            for child in self.children(c):
                for f in self.faces_of(child):
                    if f in self.cofaces:
                        self.cofaces[f].add(child)
        self._geom_cache.clear()
        return created

    def refine_cell_completely(self, cell: Key) -> set:
        """Refine every subsimplex of a leaf cell (complete subdivision of it)."""
        created: set = set()
        for f in self.faces_of(cell):
            if self.exists(f) and f not in self.refined:
                created |= self.refine(f)
        return created

    def _removable(self, p: Key) -> bool:
        if p not in self.refined:
            return False
        if any(q in self.refined for q in self.kids[p]):
            return False
        labs = p[1]
        for m in range(1, len(labs)):
            for sub in combinations(labs, m):
                if (p[0], sub) in self.refined:
                    return False
        return True

    def _unrefine(self, p: Key) -> int:
        pcs = self.kids.pop(p)
        self.refined.discard(p)
        n1 = self.n + 1
        for q in pcs:
            if len(q[1]) == n1:
                for f in self.faces_of(q):
                    s = self.cofaces.get(f)
                    if s is not None:
                        s.discard(q)
        for q in pcs:
            del self.cofaces[q]
            del self.host[q]
        return len(pcs)

    def derefine(self, marked: Iterable[Key]) -> int:
        """Remove refinements of marked subsimplices until a fixpoint is reached.

        A mark on a fine subsimplex counts as a mark on its host. A refined
        subsimplex is only coarsened when none of its pieces and none of its
        proper faces are refined. Returns the number of removed subsimplices.
        """
        cand = set()
        for m in marked:
            if m in self.refined:
                cand.add(m)
            elif m in self.host:
                cand.add(self.host[m])
        removed = 0
        changed = True
        while changed:
            changed = False
            for p in sorted(cand, key=lambda k: (-k[0], len(k[1]), k)):
                if self._removable(p):
                    removed += self._unrefine(p)
                    cand.discard(p)
                    changed = True
        if removed:
            self._geom_cache.clear()
        return removed

    # geometry
    def root_frame(self, key: Key) -> tuple:
        return self.root_cells[self.root_of(key)]

    def label_point(self, label: Label, root: int) -> np.ndarray:
        bary = label_bary(label, self.root_cells[root])
        return np.array([float(x) for x in bary]) @ self.cell_xyz[root]

    def coords(self, key: Key, root: int | None = None) -> np.ndarray:
        """Float vertex coordinates of ``key`` in the frame of a containing root cell."""
        root = self.root_of(key) if root is None else root
        ck = ("x", key, root)
        hit = self._geom_cache.get(ck)
        if hit is None:
            hit = np.array([self.label_point(lab, root) for lab in key[1]])
            self._geom_cache[ck] = hit
        return hit

    def exact_bary(self, key: Key, root: int | None = None) -> list[list[Fraction]]:
        """Exact root-frame barycentric coordinates of the vertices of ``key``."""
        root = self.root_of(key) if root is None else root
        frame = self.root_cells[root]
        return [label_bary(lab, frame) for lab in key[1]]

    def local_map(self, inner: Key, outer: Key) -> tuple:
        """Exact affine map from the reference simplex of ``inner`` to that of ``outer``.

        Returns ``(J, b)`` with ``xi_outer = J xi_inner + b`` (lists of Fractions).
        ``inner`` must lie in the closure of the cell ``outer``.
        """
        ck = ("m", inner, outer)
        hit = self._geom_cache.get(ck)
        if hit is not None:
            return hit
        root = self.root_of(outer)
        bo = self.exact_bary(outer, root)
        bi = self.exact_bary(inner, root)
        full = [[bo[j][i] for j in range(len(bo))] for i in range(len(bo[0]))]
        # independent rows give a square system for lower-dimensional ``outer``
        rows = exact.pivot_columns([list(r) for r in zip(*full)])
        mat = [full[i] for i in rows]
        bary = [exact.solve(mat, [v[i] for i in rows]) for v in bi]
        d_out = len(bo) - 1
        d_in = len(bi) - 1
        b = [bary[0][i + 1] for i in range(d_out)]
        jac = [[bary[c + 1][i + 1] - bary[0][i + 1] for c in range(d_in)] for i in range(d_out)]
        hit = (jac, b)
        self._geom_cache[ck] = hit
        return hit

    def jacobian(self, cell: Key) -> np.ndarray:
        x = self.coords(cell)
        return (x[1:] - x[0]).T

    def orientation(self, cell: Key) -> int:
        """Orientation flag of a cell with ascending vertex order (sign of det J)."""
        if len(cell[1]) != self.n + 1:
            raise ValueError("orientation is defined for n-cells")
        if self.dim != self.n:
            root = self.root_of(cell)
            return self.root_flags[root]
        return 1 if np.linalg.det(self.jacobian(cell)) > 0 else -1

    # boundary
    def _root_boundary(self) -> list[frozenset]:
        count: dict = {}
        for c in self.root_cells:
            for i in range(len(c)):
                f = c[:i] + c[i + 1:]
                count[f] = count.get(f, 0) + 1
        return [frozenset(f) for f, m in count.items() if m == 1]

    @property
    def boundary_root_facets(self) -> list[tuple]:
        return sorted(tuple(sorted(f)) for f in self._boundary_sets)

    def on_boundary(self, key: Key) -> bool:
        sup = label_support(key[1])
        return any(sup <= f for f in self._boundary_sets)

    def boundary_facet_of(self, key: Key) -> tuple | None:
        sup = label_support(key[1])
        for f in self._boundary_sets:
            if sup <= f:
                return tuple(sorted(f))
        return None

    # conformity
    def _owner(self, cell: Key, facet_labels: tuple) -> tuple[Key, Key]:
        """Existing subsimplex whose relative interior contains the facet, and the side cell."""
        for anc in self.cell_ancestry(cell):
            root = self.root_of(anc)
            frame = self.root_cells[root]
            bo = [label_bary(lab, frame) for lab in anc[1]]
            mat = [[bo[j][i] for j in range(len(bo))] for i in range(len(bo))]
            sup: set = set()
            for lab in facet_labels:
                bary = exact.solve(mat, label_bary(lab, frame))
                sup.update(i for i, x in enumerate(bary) if x != 0)
            q = (anc[0], tuple(anc[1][i] for i in sorted(sup)))
            if self.exists(q):
                return q, anc
        raise StateError(f"no owner for facet {facet_labels} of {cell}")

    def conformity_violations(self) -> list[str]:
        """Empty list when the leaf complex is free of hanging entities.

        Every facet of every leaf cell must lie in an existing leaf
        ``(n-1)``-subsimplex, and each such subsimplex must be covered exactly
        once from each adjacent side (once in total on the boundary).
        """
        problems: list[str] = []
        n = self.n
        cover: dict = {}
        for cell in self.leaf_cells():
            for f in self.faces_of(cell):
                if self.exists(f) and f in self.refined:
                    problems.append(f"leaf cell {cell} has refined face {f}")
            for i in range(n + 1):
                facet = cell[1][:i] + cell[1][i + 1:]
                owner, side = self._owner(cell, facet)
                if owner in self.refined:
                    problems.append(f"facet of {cell} lies in refined {owner}")
                    continue
                if len(owner[1]) != n:
                    problems.append(f"facet of {cell} owned by {owner} of wrong dimension")
                    continue
                area = Fraction(1, 2 ** ((n - 1) * (cell[0] - owner[0])))
                sides = cover.setdefault(owner, {})
                sides[side] = sides.get(side, 0) + area
        for owner, sides in sorted(cover.items()):
            want = 1 if self.on_boundary(owner) else 2
            if len(sides) != want or any(a != 1 for a in sides.values()):
                problems.append(f"facet entity {owner} covered {dict(sides)}")
        return problems

    def leaf_complex(self) -> LeafComplex:
        cells = self.leaf_cells()
        n = self.n
        coords = np.array([self.coords(c) for c in cells]).reshape(len(cells), n + 1, self.dim)
        flags = np.array([self.orientation(c) for c in cells], dtype=int)
        levels = np.array([c[0] for c in cells], dtype=int)
        owner: dict = {}
        for ci, cell in enumerate(cells):
            for i in range(n + 1):
                o, _ = self._owner(cell, cell[1][:i] + cell[1][i + 1:])
                owner.setdefault(o, []).append((ci, i))
        return LeafComplex(n, tuple(cells), coords, flags, levels, owner)

    def max_level(self) -> int:
        return max(c[0] for c in self.leaf_cells())

    def copy(self) -> "HierComplex":
        new = object.__new__(HierComplex)
        new.__dict__.update(self.__dict__)
        new.refined = set(self.refined)
        new.host = dict(self.host)
        new.kids = {k: list(v) for k, v in self.kids.items()}
        new.cofaces = {k: set(v) for k, v in self.cofaces.items()}
        new._geom_cache = {}
        return new


def freudenthal_incomplete(hc: HierComplex, key: Key) -> set:
    """Refine the leaf subsimplex ``key`` of ``hc``; returns the created subsimplices."""
    return hc.refine(key)
