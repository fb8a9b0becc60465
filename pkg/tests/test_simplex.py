from itertools import permutations

import pytest
from hypothesis import given, strategies as st

from hpfeec.simplex import (Simplex, boundary, chain_boundary, complement, geometric_ancestors,
                            geometric_descendants, increasing_maps, permutation_parity,
                            shuffle_sign, sort_with_parity)


def test_increasing_maps_small():
    assert increasing_maps(1, 2) == [(0, 1), (0, 2), (1, 2)]
    assert increasing_maps(0, 0) == [(0,)]


def test_increasing_maps_count_against_subsets():
    # brute force: every 3-subset of {0,1,2,3}
    subsets = [s for s in permutations(range(4), 3) if list(s) == sorted(s)]
    assert len(increasing_maps(2, 3)) == len(subsets) == 4


@pytest.mark.parametrize("k,n", [(-1, 2), (3, 2), (0, -1)])
def test_increasing_maps_rejects(k, n):
    with pytest.raises(ValueError):
        increasing_maps(k, n)


@given(st.integers(0, 5), st.data())
def test_increasing_maps_sorted_and_strict(n, data):
    k = data.draw(st.integers(0, n))
    maps = increasing_maps(k, n)
    assert maps == sorted(maps)
    assert all(all(a < b for a, b in zip(m, m[1:])) and len(m) == k + 1 for m in maps)


def test_descendants_triangle_and_counts():
    dec = geometric_descendants(2)
    assert [len(x) for x in dec.by_dim] == [3, 3, 1]
    assert geometric_descendants(0).all() == [(0,)]
    assert len(geometric_descendants(3).all()) == 15


@given(st.integers(0, 6))
def test_descendant_total(n):
    assert len(geometric_descendants(n).all()) == 2 ** (n + 1) - 1


def test_ancestors():
    tri = geometric_descendants(2)
    assert geometric_ancestors(tri, (0,)) == {(0, 1), (0, 2), (0, 1, 2)}
    assert geometric_ancestors(tri, (0,), include_self=True) == {(0,), (0, 1), (0, 2), (0, 1, 2)}
    tet = geometric_descendants(3)
    assert geometric_ancestors(tet, (0, 1)) == {(0, 1, 2), (0, 1, 3), (0, 1, 2, 3)}
    with pytest.raises(ValueError):
        geometric_ancestors(tri, (0, 3))


def test_boundary_signs():
    assert sorted(boundary(1)) == sorted([(1, (1,)), (-1, (0,))])
    assert boundary(2) == [(1, (1, 2)), (-1, (0, 2)), (1, (0, 1))]
    with pytest.raises(ValueError):
        boundary(0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_boundary_of_boundary_vanishes(n):
    chain = {f: s for s, f in boundary(n)}
    assert chain_boundary(chain) == {}


def test_parity_examples():
    assert permutation_parity((0, 1, 2)) == 1
    assert permutation_parity((1, 0, 2)) == -1
    assert permutation_parity((2, 0, 1)) == 1
    with pytest.raises(ValueError):
        permutation_parity((0, 0, 1))


def _inversions(p):
    return sum(1 for i in range(len(p)) for j in range(i + 1, len(p)) if p[i] > p[j])


@given(st.permutations(list(range(6))))
def test_parity_matches_inversion_count(p):
    assert permutation_parity(p) == (-1) ** _inversions(p)


@given(st.lists(st.integers(0, 20), min_size=1, max_size=6, unique=True))
def test_sort_with_parity(items):
    out, sign = sort_with_parity(items)
    assert list(out) == sorted(items)
    assert sign == (-1) ** _inversions(items)


def test_shuffle_sign_and_complement():
    assert shuffle_sign((1,), (0,)) == -1
    assert shuffle_sign((0,), (0, 1)) == 0
    assert complement((1,), 3) == (0, 2)


def test_simplex_orientation_flag():
    s = Simplex.from_oriented((5, 2, 9))
    assert s.vertices == (2, 5, 9) and s.orientation == -1
    assert s.dim == 2 and s.face((0, 2)) == (2, 9)
    with pytest.raises(ValueError):
        Simplex((3, 1))
