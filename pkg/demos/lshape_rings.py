"""Poisson problem (top-degree Hodge Laplacian) on the L-shape with a source
that is singular on two circles.

Low-order cells collect along the circles while smooth regions get high
orders. Writes ``lshape_rings.vtu`` with the solution and per-cell order.
"""
import sys

import numpy as np

from hpfeec.adapt import AdaptConfig, HodgeTask, adapt_loop
from hpfeec.assembly import resolve_orders
from hpfeec.meshes import lshape
from hpfeec.output import write_vtu
from hpfeec.solvers import HodgeLaplaceProblem


def source(x):
    r = np.hypot(x[:, 0], x[:, 1])
    with np.errstate(divide="ignore"):
        v = np.abs(r - 0.4) ** (-1 / 3) + np.abs(r - 0.8) ** (-1 / 3)
    return np.where(np.isfinite(v), v, 0.0)[None]


def main(max_depth: int = 4):
    hc = lshape(1)
    task = HodgeTask(HodgeLaplaceProblem(2, f=source))
    report = adapt_loop(task, hc, AdaptConfig(max_depth=max_depth, max_iter=10))
    for rec in report.iterations:
        orders = np.bincount([c.order for c in rec.cells])
        print(rec.index, rec.ndof, f"{rec.global_error:.3e}", "cells per order", orders[1:].tolist())
    orders = report.orders
    state = task.solve(hc, orders)
    od = resolve_orders(hc, orders)
    write_vtu("lshape_rings.vtu", hc, task.fields(hc, state),
              {"order": [od.leaf_cell_order(c) for c in hc.leaf_cells()]})


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 4)
