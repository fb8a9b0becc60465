"""Combinatorics of the n-simplex.

Subsimplices of a reference simplex are identified by strictly increasing
index tuples into ``0..n``. Geometry is handled elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence


def increasing_maps(k: int, n: int) -> list[tuple[int, ...]]:
    """Return all strictly increasing tuples of length ``k+1`` over ``0..n``.

    The result is in lexicographic order, which is the canonical ordering
    used for basis and DOF numbering throughout the package.
    """
    if k < 0 or n < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    return list(combinations(range(n + 1), k + 1))


def wedge_indices(k: int, n: int) -> list[tuple[int, ...]]:
    """Increasing ``k``-tuples over ``0..n-1`` (coordinate wedge indices)."""
    if k < 0 or k > n:
        return []
    return list(combinations(range(n), k))


@dataclass(frozen=True)
class Decomposition:
    """Faces of the reference ``n``-simplex grouped by dimension."""

    n: int
    by_dim: tuple[tuple[tuple[int, ...], ...], ...]

    def __contains__(self, f) -> bool:
        f = tuple(f)
        return 0 < len(f) <= self.n + 1 and f in self.by_dim[len(f) - 1]

    def all(self) -> list[tuple[int, ...]]:
        return [f for faces in self.by_dim for f in faces]


def geometric_descendants(n: int) -> Decomposition:
    """All subsimplices of the ``n``-simplex, ``2**(n+1) - 1`` in total."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return Decomposition(n, tuple(tuple(increasing_maps(k, n)) for k in range(n + 1)))


def geometric_ancestors(dec: Decomposition, f: Sequence[int],
                        include_self: bool = False) -> set[tuple[int, ...]]:
    """Subsimplices of ``dec`` whose vertex set contains that of ``f``."""
    f = tuple(f)
    if f not in dec:
        raise ValueError(f"{f} is not a subsimplex of the {dec.n}-simplex")
    fs = set(f)
    out = {s for s in dec.all() if fs <= set(s) and len(s) > len(f)}
    if include_self:
        out.add(f)
    return out


def boundary(n: int) -> list[tuple[int, tuple[int, ...]]]:
    """Signed facets of the ``n``-simplex, facet ``i`` omits vertex ``i``."""
    if n < 1:
        raise ValueError("a 0-simplex has no boundary")
    full = tuple(range(n + 1))
    return [((-1) ** i, full[:i] + full[i + 1:]) for i in range(n + 1)]


def chain_boundary(chain: dict[tuple, int]) -> dict[tuple, int]:
    """Boundary of an integer chain of simplices given as vertex tuples."""
    out: dict[tuple, int] = {}
    for s, c in chain.items():
        if len(s) < 2:
            continue
        for i in range(len(s)):
            face = s[:i] + s[i + 1:]
            out[face] = out.get(face, 0) + (-1) ** i * c
    return {f: c for f, c in out.items() if c != 0}


def permutation_parity(perm: Sequence[int]) -> int:
    """Sign of a permutation of ``0..m``: +1 if even, -1 if odd."""
    perm = list(perm)
    if sorted(perm) != list(range(len(perm))):
        raise ValueError(f"{perm} is not a permutation")
    seen = [False] * len(perm)
    sign = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def sort_with_parity(items: Iterable) -> tuple[tuple, int]:
    """Sort ``items`` ascending and return the parity of the sorting permutation."""
    items = list(items)
    order = sorted(range(len(items)), key=lambda i: items[i])
    return tuple(items[i] for i in order), permutation_parity(order)


def shuffle_sign(rate: Sequence[int], tau: Sequence[int]) -> int:
    """Sign of the permutation sorting the concatenation ``rate + tau``.

    Returns 0 if the two index sets intersect.
    """
    if set(rate) & set(tau):
        return 0
    return sort_with_parity(tuple(rate) + tuple(tau))[1]


def complement(rate: Sequence[int], n: int) -> tuple[int, ...]:
    """Increasing complement of ``rate`` in ``0..n-1``."""
    s = set(rate)
    return tuple(i for i in range(n) if i not in s)


@dataclass(frozen=True)
class Simplex:
    """A cell with ascending global vertex ids and an orientation flag.

    ``orientation`` is the parity of the permutation taking the imported
    (positively oriented) vertex order to the ascending one.
    """

    vertices: tuple
    orientation: int = 1

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.vertices, self.vertices[1:])):
            raise ValueError("vertices must be strictly ascending")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")

    @classmethod
    def from_oriented(cls, verts: Sequence) -> "Simplex":
        asc, parity = sort_with_parity(verts)
        return cls(asc, parity)

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    def face(self, sel: Sequence[int]) -> tuple:
        return tuple(self.vertices[i] for i in sel)
