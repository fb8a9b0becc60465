"""VTU (ASCII) export of leaf complexes and discrete fields."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .assembly import evaluate_field
from .mesh import HierComplex

VTK_CELL_TYPES = {1: 3, 2: 5, 3: 10}  # line, triangle, tetrahedron


def _array(name: str, values: np.ndarray, indent: str) -> str:
    values = np.asarray(values, dtype=float)
    ncomp = 1 if values.ndim == 1 else values.shape[1]
    body = " ".join(repr(float(x)) for x in values.ravel())
    return (f'{indent}<DataArray type="Float64" Name={quoteattr(name)} '
            f'NumberOfComponents="{ncomp}" format="ascii">{body}</DataArray>\n')


def write_vtu(path, hc: HierComplex, fields: Sequence[tuple] = (), cell_data: dict | None = None) -> None:
    """Write the leaf cells as an unstructured grid.

    Vertices are duplicated per cell so that discontinuous fields are shown
    as they are.

    Parameters
    ----------
    fields : sequence of ``(name, space, coefs)``
        Discrete fields; each coefficient vector of ``coefs`` becomes one
        point-data array (suffixed by its index when there are several).
    cell_data : dict, optional
        Name to per-leaf sequence of scalars, in ``hc.leaf_cells()`` order.
    """
    n = hc.n
    if n not in VTK_CELL_TYPES:
        raise ValueError(f"no VTK cell type for dimension {n}")
    leaves = hc.leaf_cells()
    pts = []
    for leaf in leaves:
        x = hc.coords(leaf)
        pad = np.zeros((n + 1, 3))
        pad[:, :x.shape[1]] = x
        pts.append(pad)
    points = np.concatenate(pts) if pts else np.zeros((0, 3))
    ref = np.vstack([np.zeros(n), np.eye(n)])
    point_arrays = []
    for name, space, coefs in fields:
        coefs = list(coefs)
        for i, c in enumerate(coefs):
            vals = [evaluate_field(space, c, leaf, ref).T for leaf in leaves]
            label = name if len(coefs) == 1 else f"{name}{i}"
            point_arrays.append((label, np.concatenate(vals)))
    npts, ncells = len(points), len(leaves)
    out = ['<?xml version="1.0"?>\n',
           '<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">\n',
           "  <UnstructuredGrid>\n",
           f'    <Piece NumberOfPoints="{npts}" NumberOfCells="{ncells}">\n',
           "      <Points>\n", _array("points", points, "        "), "      </Points>\n",
           "      <Cells>\n"]
    conn = " ".join(str(i) for i in range(npts))
    offs = " ".join(str((i + 1) * (n + 1)) for i in range(ncells))
    types = " ".join([str(VTK_CELL_TYPES[n])] * ncells)
    out += [f'        <DataArray type="Int64" Name="connectivity" format="ascii">{conn}</DataArray>\n',
            f'        <DataArray type="Int64" Name="offsets" format="ascii">{offs}</DataArray>\n',
            f'        <DataArray type="UInt8" Name="types" format="ascii">{types}</DataArray>\n',
            "      </Cells>\n"]
    if point_arrays:
        out.append("      <PointData>\n")
        out += [_array(name, v, "        ") for name, v in point_arrays]
        out.append("      </PointData>\n")
    cd = {"depth": [leaf[0] for leaf in leaves], **(cell_data or {})}
    out.append("      <CellData>\n")
    for name, v in cd.items():
        if len(v) != ncells:
            raise ValueError(f"cell data {name!r} has {len(v)} entries for {ncells} cells")
        out.append(_array(name, np.asarray(v, dtype=float), "        "))
    out += ["      </CellData>\n", "    </Piece>\n", "  </UnstructuredGrid>\n", "</VTKFile>\n"]
    Path(path).write_text("".join(out))


def read_vtu_arrays(path) -> dict:
    """Parse the data arrays of a file written by :func:`write_vtu`."""
    import xml.etree.ElementTree as ET
    root = ET.parse(path).getroot()
    out = {}
    for arr in root.iter("DataArray"):
        vals = np.array([float(x) for x in (arr.text or "").split()])
        ncomp = int(arr.get("NumberOfComponents", "1"))
        out[arr.get("Name")] = vals.reshape(-1, ncomp) if ncomp > 1 else vals
    return out
