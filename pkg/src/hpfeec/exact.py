"""Small exact linear-algebra helpers over the rationals.

Dense rank, reduced row echelon form and nullspaces are delegated to
``python-flint``; tiny determinants and inverses are done directly.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import permutations
from math import isqrt
from typing import Sequence

import flint
import numpy as np

from .simplex import permutation_parity


def to_fmpq(x) -> flint.fmpq:
    if isinstance(x, flint.fmpq):
        return x
    x = Fraction(x)
    return flint.fmpq(x.numerator, x.denominator)


def from_fmpq(x: flint.fmpq) -> Fraction:
    return Fraction(int(x.p), int(x.q))


def fmpq_matrix(rows: Sequence[Sequence]) -> flint.fmpq_mat:
    rows = [list(r) for r in rows]
    m = len(rows)
    ncol = len(rows[0]) if m else 0
    return flint.fmpq_mat(m, ncol, [to_fmpq(v) for r in rows for v in r])


def rank(rows: Sequence[Sequence]) -> int:
    """Exact rank of a rational matrix given as a list of rows."""
    if len(rows) == 0 or len(rows[0]) == 0:
        return 0
    return fmpq_matrix(rows).rank()


def pivot_columns(rows: Sequence[Sequence]) -> list[int]:
    """Pivot columns of the reduced row echelon form.

    With vectors stored as columns, the pivots are exactly the columns a
    left-to-right greedy scan keeps as linearly independent.
    """
    if len(rows) == 0 or len(rows[0]) == 0:
        return []
    r, rk = fmpq_matrix(rows).rref()
    piv = []
    ncol = r.ncols()
    for i in range(rk):
        for j in range(ncol):
            if r[i, j] != 0:
                piv.append(j)
                break
    return piv


def nullspace(rows: Sequence[Sequence], ncols: int | None = None) -> list[list[Fraction]]:
    """Exact basis of the right nullspace, in canonical (free column) order."""
    if len(rows) == 0:
        return [[Fraction(int(i == j)) for i in range(ncols)] for j in range(ncols)]
    mat = fmpq_matrix(rows)
    r, rk = mat.rref()
    ncol = mat.ncols()
    piv = []
    for i in range(rk):
        for j in range(ncol):
            if r[i, j] != 0:
                piv.append(j)
                break
    free = [j for j in range(ncol) if j not in set(piv)]
    out = []
    for fcol in free:
        v = [Fraction(0)] * ncol
        v[fcol] = Fraction(1)
        for i, pc in enumerate(piv):
            v[pc] = -from_fmpq(r[i, fcol])
        out.append(v)
    return out


def solve(a_rows: Sequence[Sequence], b: Sequence) -> list[Fraction]:
    """Solve a square nonsingular rational system exactly."""
    a = fmpq_matrix(a_rows)
    rhs = flint.fmpq_mat(len(b), 1, [to_fmpq(v) for v in b])
    x = a.solve(rhs)
    return [from_fmpq(x[i, 0]) for i in range(len(b))]


def det(m: Sequence[Sequence]):
    """Determinant by permutation expansion; intended for sizes <= 4."""
    size = len(m)
    if size == 0:
        return 1
    if size == 1:
        return m[0][0]
    if size == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = 0
    for p in permutations(range(size)):
        term = permutation_parity(p)
        for i, j in enumerate(p):
            term = term * m[i][j]
            if term == 0:
                break
        total = total + term
    return total


def inverse(m: Sequence[Sequence]) -> list[list]:
    """Inverse of a small matrix; exact for rational entries."""
    if all(isinstance(v, (int, Fraction)) for r in m for v in r):
        mat = fmpq_matrix(m).inv()
        return [[from_fmpq(mat[i, j]) for j in range(len(m))] for i in range(len(m))]
    return np.linalg.inv(np.asarray(m, dtype=float)).tolist()


def minor(m: Sequence[Sequence], rows: Sequence[int], cols: Sequence[int]):
    return det([[m[i][j] for j in cols] for i in rows])


def exact_sqrt(x):
    """Square root, exact when ``x`` is the square of a rational."""
    if isinstance(x, (int, Fraction)):
        x = Fraction(x)
        if x >= 0:
            num, den = isqrt(x.numerator), isqrt(x.denominator)
            if num * num == x.numerator and den * den == x.denominator:
                return Fraction(num, den)
    return float(x) ** 0.5
