"""Mesh generators and a plain ASCII mesh format.

File format::

    dim 2
    nodes 4
    0 0.0 0.0
    ...
    cells 2
    0 1 2
    ...

Lines starting with ``#`` are ignored. Periodic meshes are written with
per-cell coordinates in an optional ``cellcoords`` section (one line per cell,
``(n+1)*dim`` numbers).
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .mesh import HierComplex


def interval(ncells: int = 1, a: float = 0.0, b: float = 1.0) -> HierComplex:
    x = np.linspace(a, b, ncells + 1)[:, None]
    return HierComplex([(i, i + 1) for i in range(ncells)], x)


def _grid_cells(nx: int, ny: int):
    """Counter-clockwise triangles of an ``nx`` by ``ny`` grid of squares."""
    cells = []

    def vid(i, j):
        return j * (nx + 1) + i

    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((a, b, d))
            cells.append((a, d, c))
    return cells


def rectangle(nx: int = 2, ny: int = 2, x0=(0.0, 0.0), x1=(1.0, 1.0)) -> HierComplex:
    xs = np.linspace(x0[0], x1[0], nx + 1)
    ys = np.linspace(x0[1], x1[1], ny + 1)
    coords = np.array([(x, y) for y in ys for x in xs])
    return HierComplex(_grid_cells(nx, ny), coords)


def unit_square(nx: int = 2, ny: int | None = None) -> HierComplex:
    """Unit square; ``unit_square(2)`` has 8 cells."""
    return rectangle(nx, nx if ny is None else ny)


def two_triangles() -> HierComplex:
    return HierComplex([(0, 1, 3), (0, 3, 2)], np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]]))


def quad_mesh(corners, nx: int, ny: int) -> HierComplex:
    """Bilinear image of an ``nx`` by ``ny`` grid; corners in counter-clockwise order."""
    p00, p10, p11, p01 = (np.asarray(c, dtype=float) for c in corners)
    coords = []
    for j in range(ny + 1):
        t = j / ny
        for i in range(nx + 1):
            s = i / nx
            coords.append((1 - s) * (1 - t) * p00 + s * (1 - t) * p10 + s * t * p11 + (1 - s) * t * p01)
    return HierComplex(_grid_cells(nx, ny), np.array(coords))


def lshape(m: int = 1) -> HierComplex:
    """``[-1,1]^2`` without the quadrant ``x > 0, y < 0``; ``6 m^2`` cells."""
    n = 2 * m
    xs = np.linspace(-1, 1, n + 1)
    index: dict = {}
    coords = []
    cells = []

    def vid(i, j):
        if (i, j) not in index:
            index[(i, j)] = len(coords)
            coords.append((xs[i], xs[j]))
        return index[(i, j)]

    for j in range(n):
        for i in range(n):
            if i >= m and j < m:
                continue
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((a, b, d))
            cells.append((a, d, c))
    return HierComplex(cells, np.array(coords))


def annulus(nseg: int = 8, r_in: float = 0.5, r_out: float = 1.0, nrings: int = 1) -> HierComplex:
    if nseg < 3:
        raise ValueError("need at least 3 segments")
    coords = []
    for ring in range(nrings + 1):
        r = r_in + (r_out - r_in) * ring / nrings
        for s in range(nseg):
            t = 2 * math.pi * s / nseg
            coords.append((r * math.cos(t), r * math.sin(t)))
    cells = []
    for ring in range(nrings):
        for s in range(nseg):
            a = ring * nseg + s
            b = ring * nseg + (s + 1) % nseg
            c, d = a + nseg, b + nseg
            cells.append((a, d, b))
            cells.append((a, c, d))
    return HierComplex(cells, np.array(coords))


def disk(nseg: int = 8, radius: float = 1.0) -> HierComplex:
    coords = [(0.0, 0.0)] + [(radius * math.cos(2 * math.pi * s / nseg), radius * math.sin(2 * math.pi * s / nseg))
                             for s in range(nseg)]
    cells = [(0, 1 + s, 1 + (s + 1) % nseg) for s in range(nseg)]
    return HierComplex(cells, np.array(coords))


def torus(nx: int = 3, ny: int | None = None, lx: float = 1.0, ly: float = 1.0) -> HierComplex:
    """Flat periodic torus; vertex ids wrap around, coordinates are per cell."""
    ny = nx if ny is None else ny
    if nx < 3 or ny < 3:
        raise ValueError("a simplicial torus needs at least 3 cells per direction")
    cells, xyz = [], []

    def vid(i, j):
        return (j % ny) * nx + (i % nx)

    def pt(i, j):
        return (lx * i / nx, ly * j / ny)

    for j in range(ny):
        for i in range(nx):
            for tri in (((i, j), (i + 1, j), (i + 1, j + 1)), ((i, j), (i + 1, j + 1), (i, j + 1))):
                cells.append(tuple(vid(*v) for v in tri))
                xyz.append([pt(*v) for v in tri])
    return HierComplex(cells, np.array(xyz))


COOK_CORNERS = ((48.0, 0.0), (48.0, 44.0), (0.0, 60.0), (0.0, 44.0))


def cook(nx: int = 2, ny: int = 2) -> HierComplex:
    """Cook's membrane, clamped along ``x = 48`` and loaded along ``x = 0``."""
    c = COOK_CORNERS
    return quad_mesh((c[3], c[0], c[1], c[2]), nx, ny)


def unit_tetrahedron() -> HierComplex:
    return HierComplex([(0, 1, 2, 3)], np.vstack([np.zeros(3), np.eye(3)]))


def cube(m: int = 1) -> HierComplex:
    """Kuhn triangulation of the unit cube; ``6 m^3`` tetrahedra."""
    from itertools import permutations
    idx = {}
    coords = []

    def vid(p):
        if p not in idx:
            idx[p] = len(coords)
            coords.append(tuple(x / m for x in p))
        return idx[p]

    cells = []
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for perm in permutations(range(3)):
                    v = [i, j, k]
                    verts = [vid(tuple(v))]
                    for ax in perm:
                        v[ax] += 1
                        verts.append(vid(tuple(v)))
                    x = np.array([coords[q] for q in verts])
                    if np.linalg.det((x[1:] - x[0]).T) < 0:
                        verts[1], verts[2] = verts[2], verts[1]
                    cells.append(tuple(verts))
    return HierComplex(cells, np.array(coords))


GENERATORS = {
    "interval": interval,
    "square": unit_square,
    "two-triangles": two_triangles,
    "lshape": lshape,
    "annulus": annulus,
    "disk": disk,
    "torus": torus,
    "cook": cook,
    "tetrahedron": unit_tetrahedron,
    "cube": cube,
}


# ASCII I/O

def write_mesh(path, cells, coords, cell_coords=None) -> None:
    coords = np.asarray(coords, dtype=float)
    lines = [f"dim {coords.shape[1]}", f"nodes {len(coords)}"]
    lines += [f"{i} " + " ".join(repr(float(x)) for x in row) for i, row in enumerate(coords)]
    lines.append(f"cells {len(cells)}")
    lines += [" ".join(str(int(v)) for v in c) for c in cells]
    if cell_coords is not None:
        cc = np.asarray(cell_coords, dtype=float)
        lines.append(f"cellcoords {len(cc)}")
        lines += [" ".join(repr(float(x)) for x in row.ravel()) for row in cc]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Return ``(cells, coords, cell_coords or None)``."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r and not r[0].startswith("#")]
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(rows) or rows[pos][0] != name or len(rows[pos]) != 2:
            raise ValueError(f"{path}: expected '{name} <count>' at record {pos}")
        val = int(rows[pos][1])
        pos += 1
        return val

    dim = header("dim")
    nn = header("nodes")
    coords = np.zeros((nn, dim))
    for _ in range(nn):
        r = rows[pos]
        coords[int(r[0])] = [float(x) for x in r[1:1 + dim]]
        pos += 1
    nc = header("cells")
    cells = [tuple(int(v) for v in rows[pos + i]) for i in range(nc)]
    pos += nc
    cell_coords = None
    if pos < len(rows):
        m = header("cellcoords")
        npc = len(cells[0])
        cell_coords = np.array([[float(x) for x in rows[pos + i]] for i in range(m)]).reshape(m, npc, dim)
    return cells, coords, cell_coords


def load_mesh(path) -> HierComplex:
    cells, coords, cc = read_mesh(path)
    return HierComplex(cells, coords if cc is None else cc)


def save_leaf_mesh(hc: HierComplex, path) -> None:
    """Write the leaf complex as a flat mesh (vertices merged by label)."""
    ids: dict = {}
    coords = []
    cells = []
    per_cell = []
    for leaf in hc.leaf_cells():
        x = hc.coords(leaf)
        row = []
        for lab, p in zip(leaf[1], x):
            if lab not in ids:
                ids[lab] = len(coords)
                coords.append(p)
            row.append(ids[lab])
        if hc.orientation(leaf) < 0:
            row[0], row[1] = row[1], row[0]
            x = x[[1, 0] + list(range(2, len(x)))]
        cells.append(row)
        per_cell.append(x)
    periodic = hc.cell_xyz.ndim == 3 and _is_periodic(hc)
    write_mesh(path, cells, np.array(coords), np.array(per_cell) if periodic else None)


def _is_periodic(hc: HierComplex) -> bool:
    seen: dict = {}
    for c, xyz in zip(hc.root_cells, hc.cell_xyz):
        for v, p in zip(c, xyz):
            if v in seen and not np.allclose(seen[v], p):
                return True
            seen[v] = p
    return False
