"""Grundmann-Moeller quadrature on the reference simplex.

The rule of index ``s`` is exact for total degree ``2s+1``. Its points have
denominators ``2s+1+n-2i`` and so the point set of ``s`` is contained in the
point set of ``s+1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial
import threading

import numpy as np

from .polyform import Polynomial


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on ``{x >= 0, sum x <= 1}``.

    Attributes
    ----------
    points : tuple of tuple of Fraction
        Barycentric coordinates ``(lambda_0, ..., lambda_n)``.
    weights : tuple of Fraction
        Exact weights; they sum to ``1/n!``.
    exact_degree : int
    """

    n: int
    points: tuple
    weights: tuple
    exact_degree: int

    @property
    def ref_points(self) -> np.ndarray:
        """Float reference coordinates ``(lambda_1, ..., lambda_n)``, shape ``(m, n)``."""
        return _float_cache(self)[0]

    @property
    def float_weights(self) -> np.ndarray:
        return _float_cache(self)[1]

    def __len__(self) -> int:
        return len(self.weights)


_float_store: dict = {}


def _float_cache(rule: QuadratureRule):
    key = (rule.n, rule.exact_degree)
    hit = _float_store.get(key)
    if hit is None:
        pts = np.array([[float(c) for c in p[1:]] for p in rule.points]).reshape(len(rule.points), rule.n)
        w = np.array([float(c) for c in rule.weights])
        hit = _float_store[key] = (pts, w)
    return hit


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


_lock = threading.Lock()


@lru_cache(maxsize=None)
def _gm(n: int, s: int) -> QuadratureRule:
    d = 2 * s + 1
    acc: dict = {}
    for i in range(s + 1):
        w = Fraction((-1) ** i * (d + n - 2 * i) ** d, 2 ** (2 * s) * factorial(i) * factorial(d + n - i))
        den = d + n - 2 * i
        for beta in _compositions(s - i, n + 1):
            pt = tuple(Fraction(2 * b + 1, den) for b in beta)
            acc[pt] = acc.get(pt, 0) + w
    pts = sorted(p for p in acc if acc[p] != 0)
    return QuadratureRule(n, tuple(pts), tuple(acc[p] for p in pts), d)


def grundmann_moeller(n: int, s: int) -> QuadratureRule:
    """Grundmann-Moeller rule of index ``s`` on the reference ``n``-simplex."""
    if n < 1 or s < 0:
        raise ValueError("need n >= 1 and s >= 0")
    with _lock:
        return _gm(n, s)


def rule_for_degree(n: int, degree: int) -> QuadratureRule:
    """Smallest Grundmann-Moeller rule exact for polynomials of ``degree``."""
    s = max(0, degree // 2)
    return grundmann_moeller(n, s)


def integrate(p: Polynomial, rule: QuadratureRule):
    """Quadrature sum of ``p`` (in reference coordinates) with exact weights."""
    total = 0
    for pt, w in zip(rule.points, rule.weights):
        total += w * p(pt[1:])
    return total
