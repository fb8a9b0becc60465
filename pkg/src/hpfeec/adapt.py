"""hp-adaptive driver steered by the spectral decay indicator.

Each iteration solves, indicates every leaf cell, and then
h-refines cells with slow decay, p-enriches cells with fast decay, forces
the lowest order where the decay is critically slow, and derefines
families of cells whose decay is very fast and whose error is negligible.
After the loop a final sweep keeps lowest-order regions frozen and enriches
the rest.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .assembly import (FULL, MINUS, QUASI, Space, evaluate_field, l2_error, l2_projection,
                       resolve_orders)
from .indicator import IndicatorResult, aggregate, indicate_cell
from .mesh import HierComplex, Key, StateError
from .solvers import (ElasticityProblem, HodgeLaplaceProblem, flux_matrix, hydrostatic_minimum,
                      solve_elasticity, solve_hodge_laplace)


@dataclass
class AdaptConfig:
    r0: int = 3
    r_max: int = 7
    max_depth: int = 6
    rate_critical: float = 0.5
    rate_low: float = 1.0
    rate_high: float = 2.5
    rate_derefine: float = 4.0
    max_iter: int = 12
    target_error: float = 1e-10
    bulk: float = 0.9
    derefine_fraction: float = 1e-3
    final_sweeps: int = 1
    max_dof: int = 200_000
    stagnation_window: int = 3
    stagnation_factor: float = 0.9
    check_conformity: bool = False

    def __post_init__(self):
        if not (self.rate_critical <= self.rate_low < self.rate_high):
            raise ValueError("need rate_critical <= rate_low < rate_high")
        if self.max_depth < 1 or self.r0 < 1 or self.r_max < self.r0:
            raise ValueError("inconsistent depth or order limits")

    @classmethod
    def from_file(cls, path) -> "AdaptConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        return cls.from_mapping(parse_config(Path(path).read_text()))

    @classmethod
    def from_mapping(cls, values: dict) -> "AdaptConfig":
        kwargs = {}
        fields_ = cls.__dataclass_fields__
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in fields_:
                continue
            typ = fields_[name].type
            if typ in ("int", int):
                kwargs[name] = int(raw)
            elif typ in ("bool", bool):
                kwargs[name] = str(raw).lower() in ("1", "true", "yes", "on")
            else:
                kwargs[name] = float(raw)
        return cls(**kwargs)


def parse_config(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        out[key] = value
    return out


def cell_label(key: Key) -> str:
    """Compact deterministic identifier of a subsimplex key."""
    parts = []
    for roots, mult in key[1]:
        parts.append(".".join(f"{r}x{m}" if m != 1 else str(r) for r, m in zip(roots, mult)))
    return f"L{key[0]}:" + "|".join(parts)


@dataclass
class CellRecord:
    key: Key
    estimate: float
    rate: float
    reliable: bool
    nondecaying: bool
    depth: int
    order: int


@dataclass
class MarkSets:
    h: set = field(default_factory=set)
    p: set = field(default_factory=set)
    low: set = field(default_factory=set)
    derefine: set = field(default_factory=set)

    def empty(self) -> bool:
        return not (self.h or self.p or self.low or self.derefine)


def mark_cells(records: list[CellRecord], config: AdaptConfig, final: bool = False) -> MarkSets:
    """Classify cells by decay rate, ranked by error.

    Cells below ``rate_critical`` are forced to the lowest order and
    h-refined while below the maximum depth. Among the cells that carry the
    ``bulk`` fraction of the squared error, slow decay leads to h-refinement
    and fast decay to p-enrichment; cells above ``rate_high`` are always
    enriched. Order-capped cells fall back to h-refinement. In the final
    sweep lowest-order cells are frozen.
    """
    ranked = sorted(records, key=lambda r: (-r.estimate, cell_label(r.key)))
    total = sum(r.estimate ** 2 for r in ranked)
    bulk, acc = set(), 0.0
    for r in ranked:
        if total == 0 or acc >= config.bulk * total:
            break
        bulk.add(r.key)
        acc += r.estimate ** 2
    emax = ranked[0].estimate if ranked else 0.0
    out = MarkSets()
    if not final:
        # fast decay and negligible error: such cells would otherwise be enriched
        out.derefine = {r.key for r in ranked
                        if r.depth > 0 and r.reliable and r.rate >= config.rate_derefine
                        and r.estimate <= config.derefine_fraction * emax}
    for r in ranked:
        if (r.estimate == 0 and not r.nondecaying) or r.key in out.derefine:
            continue
        can_h = r.depth < config.max_depth
        slow = r.nondecaying or r.rate < config.rate_low
        if final:
            if r.order == 1:
                continue
            if r.key in bulk:
                if slow and can_h:
                    out.h.add(r.key)
                elif r.order < config.r_max:
                    out.p.add(r.key)
            continue
        if r.rate < config.rate_critical or (r.nondecaying and not r.reliable):
            out.low.add(r.key)
            if can_h:
                out.h.add(r.key)
            continue
        if r.rate >= config.rate_high or (r.key in bulk and not slow):
            if r.order < config.r_max:
                out.p.add(r.key)
            elif r.key in bulk and can_h:
                out.h.add(r.key)
            continue
        if r.key in bulk and slow and can_h:
            out.h.add(r.key)
    return out


# refinement actions

def h_refine(hc: HierComplex, cell: Key) -> None:
    """Complete subdivision of a leaf cell, refining coarser owners as needed."""
    n = hc.n
    for _ in range(64 * (n + 1)):
        todo = None
        for d in range(1, n + 1):
            for f in hc.faces_of(cell, d):
                if hc.exists(f):
                    if f not in hc.refined:
                        todo = f
                        break
                else:
                    todo = owner_of(hc, cell, f)
                    break
            if todo is not None:
                break
        if todo is None:
            return
        if len(todo[1]) == n + 1 and todo != cell:
            # a coarser owner cell is subdivided completely as well
            h_refine(hc, todo)
        else:
            hc.refine(todo)
    raise StateError(f"h-refinement of {cell} did not terminate")


def owner_of(hc: HierComplex, cell: Key, f: Key) -> Key:
    """Existing leaf subsimplex whose relative interior contains face ``f`` of ``cell``."""
    owner, _ = hc._owner(cell, f[1])
    return owner


def derefine_families(hc: HierComplex, cells: set) -> int:
    """Coarsen parents all of whose children are leaves in ``cells``.

    Faces of such a parent are coarsened too unless a refined cell outside
    the coarsened set still contains them.
    """
    parents: dict = {}
    for c in cells:
        p = hc.parent(c)
        if p is not None:
            parents.setdefault(p, set()).add(c)
    eligible = {p for p, kids in parents.items()
                if set(hc.children(p)) == kids and all(hc.is_leaf(k) for k in kids)}
    marks = []
    for p in sorted(eligible):
        marks.extend(hc.pieces(p))
        for f in hc.faces_of(p)[:-1]:
            if f in hc.refined and all(c in eligible or c not in hc.refined for c in hc.cofaces[f]):
                marks.extend(hc.pieces(f))
    return hc.derefine(marks) if marks else 0


# tasks

def field_degree(space: Space, leaf: Key) -> int:
    r = space.cells[leaf].order
    return r - 1 if (space.k == space.n and space.family == MINUS) else r


class Task:
    """Problem adapter used by :func:`adapt_loop`."""

    name = "task"

    def solve(self, hc: HierComplex, orders: dict):
        raise NotImplementedError

    def indicate(self, hc: HierComplex, state) -> dict:
        raise NotImplementedError

    def ndof(self, state) -> int:
        raise NotImplementedError

    def exact_error(self, hc: HierComplex, state) -> float | None:
        return None

    def quantities(self, hc: HierComplex, state) -> dict:
        return {}

    def fields(self, hc: HierComplex, state) -> list:
        """``(name, space, coefficient vectors)`` for output."""
        return []


def _indicate_fields(hc, pairs) -> dict:
    out = {}
    for leaf in hc.leaf_cells():
        res = []
        for space, coefs in pairs:
            deg = field_degree(space, leaf)
            for c in coefs:
                res.append(indicate_cell(space, c, leaf, max(deg, 0)))
        out[leaf] = aggregate(res)
    return out


@dataclass
class ProjectionState:
    space: Space
    coef: np.ndarray


class ProjectionTask(Task):
    """Galerkin L2 projection of a given form field."""

    name = "projection"

    def __init__(self, func: Callable, k: int = 0, family: str = MINUS, variant: str = QUASI):
        self.func, self.k, self.family, self.variant = func, k, family, variant

    def solve(self, hc, orders):
        space = Space(hc, resolve_orders(hc, orders), self.k, self.family, self.variant)
        return ProjectionState(space, l2_projection(hc, space, self.func))

    def indicate(self, hc, state):
        return _indicate_fields(hc, [(state.space, [state.coef])])

    def ndof(self, state):
        return state.space.nfree

    def exact_error(self, hc, state):
        return l2_error(hc, state.space, state.coef, self.func)

    def fields(self, hc, state):
        return [("u", state.space, [state.coef])]


class HodgeTask(Task):
    name = "hodge-laplace"

    def __init__(self, problem: HodgeLaplaceProblem, exact_u: Callable | None = None):
        self.problem, self.exact_u = problem, exact_u

    def solve(self, hc, orders):
        prob = HodgeLaplaceProblem(**{**self.problem.__dict__, "order": orders})
        return solve_hodge_laplace(prob, hc)

    def indicate(self, hc, state):
        pairs = [(state.u_space, [state.u])]
        if state.codiff_space is not None:
            pairs.insert(0, (state.codiff_space, [state.codiff]))
        return _indicate_fields(hc, pairs)

    def ndof(self, state):
        return state.u_space.nfree + (state.codiff_space.nfree if state.codiff_space is not None else 0)

    def exact_error(self, hc, state):
        if self.exact_u is None:
            return None
        return l2_error(hc, state.u_space, state.u, self.exact_u)

    def fields(self, hc, state):
        out = [("u", state.u_space, [state.u])]
        if state.codiff_space is not None:
            out.insert(0, ("codiff", state.codiff_space, [state.codiff]))
        return out


class ElasticityTask(Task):
    name = "elasticity"

    def __init__(self, problem: ElasticityProblem, probe: np.ndarray | None = None):
        self.problem = problem
        self.probe = probe

    def solve(self, hc, orders):
        prob = ElasticityProblem(**{**self.problem.__dict__, "order": orders})
        return solve_elasticity(prob, hc)

    def indicate(self, hc, state):
        return _indicate_fields(hc, [(state.stress_space, state.stress)])

    def ndof(self, state):
        n = len(state.stress)
        return n * state.stress_space.nfree + (n + n * (n - 1) // 2) * state.disp_space.nfree

    def quantities(self, hc, state):
        from .solvers import point_value
        out = {}
        if self.probe is not None:
            u = point_value(hc, state, self.probe)
            for i, x in enumerate(u):
                out[f"probe_u{i}"] = float(x)
        hmin, where, _ = hydrostatic_minimum(hc, state)
        out["hydrostatic_min"] = hmin
        out.update({f"hydrostatic_min_x{i}": float(x) for i, x in enumerate(where)})
        return out

    def fields(self, hc, state):
        return [("stress", state.stress_space, state.stress), ("displacement", state.disp_space, state.displacement)]


# reporting

@dataclass
class IterationRecord:
    index: int
    ndof: int
    global_error: float
    exact_error: float | None
    cells: list
    actions: dict
    quantities: dict
    final_sweep: bool = False


@dataclass
class RunReport:
    task: str
    iterations: list = field(default_factory=list)
    #: cell orders behind the last iteration, suitable for ``task.solve``
    orders: dict = field(default_factory=dict)
    converged: bool = False
    hit_max_iter: bool = False
    stagnated: bool = False

    def append(self, rec: IterationRecord) -> None:
        self.iterations.append(rec)

    @property
    def last(self) -> IterationRecord:
        return self.iterations[-1]

    def convergence_table(self) -> list[tuple]:
        return [(r.index, r.ndof, r.global_error, r.exact_error) for r in self.iterations]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        keys = sorted({k for r in self.iterations for k in r.quantities})
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "ndof", "global_error", "exact_error", "h", "p", "low", "derefine",
                    "final_sweep", "max_depth", "max_order"] + keys)
        for r in self.iterations:
            depth = max(c.depth for c in r.cells)
            order = max(c.order for c in r.cells)
            w.writerow([r.index, r.ndof, repr(r.global_error),
                        "" if r.exact_error is None else repr(r.exact_error),
                        r.actions.get("h", 0), r.actions.get("p", 0), r.actions.get("low", 0),
                        r.actions.get("derefine", 0), int(r.final_sweep), depth, order]
                       + [repr(r.quantities.get(k, "")) for k in keys])
        return buf.getvalue()

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "cell", "depth", "order", "estimate", "rate", "reliable", "nondecaying"])
        for r in self.iterations:
            for c in r.cells:
                w.writerow([r.index, cell_label(c.key), c.depth, c.order, repr(c.estimate), repr(c.rate),
                            int(c.reliable), int(c.nondecaying)])
        return buf.getvalue()

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.csv").write_text(self.summary_csv())
        (d / "cells.csv").write_text(self.cells_csv())


# driver

def _face_orders(hc: HierComplex, od, leaf: Key) -> int:
    """Lowest resolved order among the positive-dimensional faces of a leaf."""
    low = None
    for f in hc.faces_of(leaf):
        if len(f[1]) < 2:
            continue
        g = f if hc.exists(f) else owner_of(hc, leaf, f)
        r = od.sub_order.get(g)
        if r is not None:
            low = r if low is None else min(low, r)
    return low if low is not None else od.leaf_cell_order(leaf)


def _remembered(hc: HierComplex, leaf: Key, memory: dict, default):
    for anc in hc.cell_ancestry(leaf):
        if anc in memory:
            return memory[anc]
    return default


def _records(hc: HierComplex, ind: dict, od, memory: dict, config: AdaptConfig) -> list[CellRecord]:
    out = []
    for leaf in hc.leaf_cells():
        res: IndicatorResult = ind[leaf]
        rate, reliable = res.rate, res.reliable
        order = od.leaf_cell_order(leaf)
        # traces cut down by a lower-order neighbour distort the spectrum
        clipped = order > 1 and _face_orders(hc, od, leaf) < order
        if clipped:
            # never forced low on account of a neighbour
            rate = max(rate if reliable else _remembered(hc, leaf, memory, rate),
                        config.rate_critical)
        elif reliable:
            memory[leaf] = rate
        else:
            remembered = _remembered(hc, leaf, memory, None)
            if remembered is not None:
                rate, reliable = remembered, True
        out.append(CellRecord(leaf, res.estimate, rate, reliable, res.nondecaying and not reliable,
                              leaf[0], order))
    return out


def adapt_loop(task: Task, hc: HierComplex, config: AdaptConfig | None = None,
               callback: Callable | None = None) -> RunReport:
    """Run the hp-adaptive loop in place on ``hc``."""
    config = config or AdaptConfig()
    orders: dict = {c: config.r0 for c in hc.root_keys(hc.n)}
    memory: dict = {}
    report = RunReport(task.name)
    sweeps_left = config.final_sweeps
    final = False
    it = 0
    # iterations since the estimate last improved on its best value
    best, idle = math.inf, 0
    while True:
        od = resolve_orders(hc, orders)
        state = task.solve(hc, orders)
        ind = task.indicate(hc, state)
        records = _records(hc, ind, od, memory, config)
        gerr = math.sqrt(sum(r.estimate ** 2 for r in records))
        ndof = task.ndof(state)
        rec = IterationRecord(it, ndof, gerr, task.exact_error(hc, state), records, {},
                              task.quantities(hc, state), final)
        report.append(rec)
        report.orders = dict(orders)
        if callback is not None:
            callback(it, hc, state, rec)
        if gerr <= config.target_error:
            report.converged = True
            break
        if gerr < config.stagnation_factor * best:
            best, idle = gerr, 0
        else:
            idle += 1
        marks = mark_cells(records, config, final=final)
        # irregular cells still above the depth limit keep the loop going
        localized = all(r.depth >= config.max_depth for r in records if r.key in marks.low)
        if not final and localized and idle >= config.stagnation_window:
            report.stagnated = True
            break
        if final and sweeps_left == 0:
            break
        if it + 1 >= config.max_iter and not final:
            report.hit_max_iter = True
            if sweeps_left == 0:
                break
            final = True
            marks = mark_cells(records, config, final=True)
        if marks.empty() or ndof > config.max_dof:
            if final or sweeps_left == 0:
                break
            final = True
            marks = mark_cells(records, config, final=True)
            if marks.empty():
                break
        if final:
            sweeps_left -= 1
        rec.actions = {"h": len(marks.h), "p": len(marks.p), "low": len(marks.low),
                       "derefine": len(marks.derefine)}
        _apply(hc, orders, od, marks, config)
        if config.check_conformity:
            bad = hc.conformity_violations()
            if bad:
                raise StateError(f"adaptation produced a nonconforming mesh: {bad[0]}")
        it += 1
    return report


def _defining(hc: HierComplex, leaf: Key) -> Key:
    for c in reversed(hc.cell_ancestry(leaf)):
        if any(len(f[1]) > 1 and hc.is_leaf(f) for f in hc.faces_of(c)):
            return c
    return leaf


def _isolate(hc: HierComplex, leaf: Key) -> None:
    """Refine coarse faces until ``leaf`` defines its own order."""
    while (d := _defining(hc, leaf)) != leaf:
        for f in hc.faces_of(d):
            if len(f[1]) > 1 and hc.is_leaf(f):
                hc.refine(f)


def _apply(hc: HierComplex, orders: dict, od, marks: MarkSets, config: AdaptConfig) -> None:
    # pin current orders so that splitting a shared defining cell changes nothing
    for leaf in hc.leaf_cells():
        orders[leaf] = od.leaf_cell_order(leaf)
    for leaf in sorted(marks.low | marks.p | marks.h):
        if hc.is_leaf(leaf):
            _isolate(hc, leaf)
    for leaf in sorted(marks.low):
        orders[leaf] = 1
    for leaf in sorted(marks.p):
        orders[leaf] = min(od.leaf_cell_order(leaf) + 1, config.r_max)
    for leaf in sorted(marks.h):
        # children of a forced cell are probed again at the initial order
        orders[leaf] = config.r0 if leaf in marks.low else orders.get(leaf, od.leaf_cell_order(leaf))
    for leaf in sorted(marks.h):
        if hc.is_leaf(leaf):
            h_refine(hc, leaf)
    if marks.derefine:
        cells = {c for c in marks.derefine if hc.is_leaf(c)}
        parents = {hc.parent(c) for c in cells}
        removed = derefine_families(hc, cells)
        if removed:
            for p in parents:
                if p is not None and hc.is_leaf(p):
                    kids = [orders.get(c, 0) for c in cells if hc.parent(c) == p]
                    orders[p] = min(max(kids + [orders.get(p, 1)]), config.r_max)
