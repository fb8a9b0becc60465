"""Command line interface: ``python -m hpfeec {solve,basis,refine,report}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import meshes
from .adapt import AdaptConfig, ElasticityTask, HodgeTask, ProjectionTask, adapt_loop
from .assembly import resolve_orders
from .basis import build_hierarchical, dump_basis, space_dim
from .mesh import HierComplex, StateError
from .output import write_vtu
from .solvers import ElasticityProblem, HodgeLaplaceProblem

log = logging.getLogger("hpfeec")

ENTITY_DIMS = {"vertex": 0, "edge": 1, "face": 2, "triangle": 2, "cell": None, "tet": 3}


# mesh and data selection

def load_any_mesh(source: str) -> HierComplex:
    """A mesh file, or a generator name with an optional size, as in ``lshape:2``."""
    path = Path(source)
    if path.exists():
        return meshes.load_mesh(path)
    name, _, arg = source.partition(":")
    if name not in meshes.GENERATORS:
        raise ValueError(f"{source!r} is neither a mesh file nor one of {sorted(meshes.GENERATORS)}")
    gen = meshes.GENERATORS[name]
    return gen(int(arg)) if arg else gen()


def parse_entity(text: str, n: int) -> tuple[int, int]:
    """``edge:3`` to ``(1, 3)``; a bare dimension number also works (``1:3``)."""
    kind, sep, idx = text.partition(":")
    if not sep:
        raise ValueError(f"entity {text!r} should look like edge:3")
    if kind.isdigit():
        dim = int(kind)
    elif kind in ENTITY_DIMS:
        dim = n if ENTITY_DIMS[kind] is None else ENTITY_DIMS[kind]
    else:
        raise ValueError(f"unknown entity kind {kind!r}")
    return dim, int(idx)


def ring_source(x: np.ndarray) -> np.ndarray:
    """Source that is singular on the circles of radius 0.4 and 0.8."""
    r = np.hypot(x[:, 0], x[:, 1])
    with np.errstate(divide="ignore"):
        v = np.abs(r - 0.4) ** (-1 / 3) + np.abs(r - 0.8) ** (-1 / 3)
    return np.where(np.isfinite(v), v, 0.0)


def smooth_source(x: np.ndarray) -> np.ndarray:
    return np.prod(np.sin(np.pi * x), axis=1)


def tanh_profile(x: np.ndarray) -> np.ndarray:
    return np.tanh(20.0 * (x[:, 0] - 0.5))


SOURCES = {"ring": ring_source, "smooth": smooth_source, "tanh": tanh_profile,
           "one": lambda x: np.ones(len(x))}


def _components(fn, ncomp: int):
    return lambda x: np.repeat(fn(x)[None], ncomp, axis=0)


# cook's membrane defaults

def cook_task(tip=(0.0, 60.0), load=100.0 / 16.0):
    def region(centroid, normal):
        return centroid[0] < 48.0 - 1e-9

    def traction(x):
        out = np.zeros((2, len(x)))
        out[1] = np.where(np.abs(x[:, 0]) < 1e-9, load, 0.0)
        return out

    prob = ElasticityProblem(250.0, 0.5, "plane_strain", traction_region=region, traction=traction)
    return ElasticityTask(prob, probe=np.array(tip))


# subcommands

def cmd_solve(args) -> int:
    hc = load_any_mesh(args.mesh)
    config = AdaptConfig.from_file(args.config) if args.config else AdaptConfig()
    if args.max_iter is not None:
        config = AdaptConfig(**{**config.__dict__, "max_iter": args.max_iter})
    from math import comb
    if args.problem == "hodge-laplace":
        k = hc.n if args.k is None else args.k
        f = _components(SOURCES[args.source], comb(hc.n, k))
        task = HodgeTask(HodgeLaplaceProblem(k, f=f))
    elif args.problem == "projection":
        k = 0 if args.k is None else args.k
        task = ProjectionTask(_components(SOURCES[args.source], comb(hc.n, k)), k)
    else:
        task = cook_task()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.adapt:
        report = adapt_loop(task, hc, config, callback=_progress)
        orders = report.orders
        report.write(out)
        print(f"iterations {len(report.iterations)}  dof {report.last.ndof}  "
              f"estimate {report.last.global_error:.3e}  converged {report.converged}")
    else:
        orders = args.order
        report = None
    state = task.solve(hc, orders)
    od = resolve_orders(hc, orders)
    leaves = hc.leaf_cells()
    cell_data = {"order": [od.leaf_cell_order(c) for c in leaves]}
    if report is not None:
        by_key = {r.key: r for r in report.last.cells}
        cell_data["estimate"] = [by_key[c].estimate for c in leaves]
        cell_data["rate"] = [by_key[c].rate for c in leaves]
    write_vtu(out / "solution.vtu", hc, task.fields(hc, state), cell_data)
    meshes.save_leaf_mesh(hc, out / "mesh.msh")
    for name, value in sorted(task.quantities(hc, state).items()):
        print(f"{name} {value:.6g}")
    print(f"wrote {out}")
    return 0


def _progress(it, hc, state, rec) -> None:
    log.info("iteration %d: %d dof, estimate %.3e", it, rec.ndof, rec.global_error)


def cmd_basis(args) -> int:
    rows = [("order", "family", "dimension")]
    for r in range(1, args.r + 1):
        rows.append((r, args.family, space_dim(args.n, args.k, r, args.family)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"dims_n{args.n}_k{args.k}.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    for row in rows:
        print("{:>6} {:>6} {:>10}".format(*row))
    if args.dump:
        basis = build_hierarchical(args.n, args.k, args.r)
        path = out / f"basis_n{args.n}_k{args.k}_r{args.r}.pkl"
        dump_basis(basis, path)
        print(f"wrote {path} ({len(basis.forms)} forms)")
    return 0


def cmd_refine(args) -> int:
    hc = load_any_mesh(args.mesh)
    for text in args.entity:
        dim, idx = parse_entity(text, hc.n)
        key = hc.entity(dim, idx)
        hc.refine(key)
    bad = hc.conformity_violations()
    if bad:
        raise StateError(f"refinement left a nonconforming complex: {bad[0]}")
    meshes.save_leaf_mesh(hc, args.out)
    print(f"{len(hc.leaf_cells())} leaf cells written to {args.out}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.run)
    if path.is_dir():
        path = path / "report.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("empty report")
        return 1
    extra = [k for k in rows[0] if k.startswith("probe") or k == "hydrostatic_min"]
    head = ["iteration", "ndof", "global_error", "exact_error", "max_depth", "max_order"] + extra
    print(" ".join(f"{h:>14}" for h in head))
    for r in rows:
        cells = []
        for h in head:
            v = r.get(h, "")
            try:
                v = f"{float(v):.6g}" if h not in ("iteration", "ndof", "max_depth", "max_order") else v
            except ValueError:
                pass
            cells.append(f"{v:>14}")
        print(" ".join(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hpfeec", description="hp-adaptive finite element exterior calculus")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem, optionally adaptively")
    s.add_argument("--problem", choices=["hodge-laplace", "projection", "elasticity"], default="hodge-laplace")
    s.add_argument("--mesh", default="square", help="mesh file or generator name[:size]")
    s.add_argument("--k", type=int, default=None, help="form degree")
    s.add_argument("--order", type=int, default=3, help="uniform order without --adapt")
    s.add_argument("--source", choices=sorted(SOURCES), default="ring")
    s.add_argument("--adapt", action="store_true")
    s.add_argument("--config", help="key = value file of adaptivity settings")
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--out", default="run")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("basis", help="build a p-hierarchical basis and tabulate dimensions")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--r", type=int, required=True)
    b.add_argument("--family", choices=["minus", "full"], default="minus")
    b.add_argument("--dump", action="store_true", help="write the basis cache file")
    b.add_argument("--out", default=".")
    b.set_defaults(func=cmd_basis)

    r = sub.add_parser("refine", help="refine mesh entities and write the leaf mesh")
    r.add_argument("--mesh", required=True)
    r.add_argument("--entity", action="append", required=True, help="kind:index, e.g. edge:3")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_refine)

    t = sub.add_parser("report", help="print the convergence table of a run")
    t.add_argument("run", help="run directory or report.csv")
    t.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, StateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
