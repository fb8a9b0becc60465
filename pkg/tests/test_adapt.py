import csv
import io

import numpy as np
import pytest

from hpfeec.adapt import (AdaptConfig, CellRecord, HodgeTask, ProjectionTask, adapt_loop, cell_label, h_refine,
                          mark_cells, parse_config)
from hpfeec.meshes import interval, lshape, two_triangles, unit_square
from hpfeec.solvers import HodgeLaplaceProblem


def rec(name, estimate, rate, depth=1, order=3, reliable=True, nondecaying=False):
    return CellRecord((depth, ((( name,), (1,)),)), estimate, rate, reliable, nondecaying, depth, order)


def test_config_parsing(tmp_path):
    text = "# comment\nmax-depth = 4\nrate_high = 3.5  # inline\ncheck_conformity = yes\nunknown = 1\n"
    path = tmp_path / "cfg.txt"
    path.write_text(text)
    cfg = AdaptConfig.from_file(path)
    assert cfg.max_depth == 4 and cfg.rate_high == 3.5 and cfg.check_conformity
    assert cfg.r0 == AdaptConfig().r0
    with pytest.raises(ValueError):
        parse_config("max_depth 4")


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(rate_low=3.0, rate_high=2.0)
    with pytest.raises(ValueError):
        AdaptConfig(r0=5, r_max=4)


def test_marking_by_decay_rate():
    cfg = AdaptConfig()
    records = [rec(0, 1.0, 0.2), rec(1, 0.9, 0.8), rec(2, 0.8, 2.0), rec(3, 0.5, 3.0),
               rec(4, 0.1, 1.5), rec(5, 1e-6, 5.0, depth=2)]
    m = mark_cells(records, cfg)

    def ids(keys):
        return {r.key[1][0][0][0] for r in records if r.key in keys}

    assert ids(m.low) == {0}
    assert ids(m.h) == {0, 1}
    # cell 3 decays fast enough to be enriched outside the bulk, cell 4 is left alone
    assert ids(m.p) == {2, 3}
    assert ids(m.derefine) == {5}


def test_capped_order_falls_back_to_h():
    m = mark_cells([rec(0, 1.0, 2.0, order=7)], AdaptConfig(r_max=7))
    assert m.h and not m.p


def test_marking_respects_limits():
    cfg = AdaptConfig(max_depth=2)
    m = mark_cells([rec(0, 1.0, 0.1, depth=2)], cfg)
    assert m.low and not m.h
    m = mark_cells([rec(0, 1.0, 0.1, order=1)], cfg, final=True)
    assert m.empty()
    m = mark_cells([rec(0, 1.0, 2.0, order=3)], cfg, final=True)
    assert m.p


def test_zero_error_cells_are_left_alone():
    assert mark_cells([rec(0, 0.0, 0.0)], AdaptConfig()).empty()


def test_h_refine_subdivides_the_cell_and_owners():
    hc = two_triangles()
    c0 = hc.cell_key(0)
    hc.refine(next(e for e in hc.faces_of(c0, 1) if hc.on_boundary(e)))
    other = hc.cell_key(1)
    h_refine(hc, other)
    assert other in hc.refined
    assert all(f in hc.refined for f in hc.faces_of(other, 1))
    assert hc.conformity_violations() == []
    # a fine cell next to a coarse one pulls the coarse one along
    fine = hc.children(other)[0]
    h_refine(hc, fine)
    assert hc.conformity_violations() == []


def test_polynomial_data_needs_no_adaptation():
    task = ProjectionTask(lambda x: (1 + x[:, 0] * x[:, 1] - x[:, 1] ** 2)[None])
    rep = adapt_loop(task, unit_square(2), AdaptConfig(r0=3))
    assert rep.converged and len(rep.iterations) == 1
    assert rep.last.exact_error < 1e-12


def test_one_dimensional_front_gets_resolved():
    task = ProjectionTask(lambda x: np.tanh(20 * (x[:, 0] - 0.5))[None])
    hc = interval(4)
    rep = adapt_loop(task, hc, AdaptConfig(max_depth=10, max_iter=8, target_error=1e-14, check_conformity=True))
    errs = [r.exact_error for r in rep.iterations]
    assert errs[-1] < 1e-4 * errs[0]
    assert max(c.order for c in rep.last.cells) > AdaptConfig().r0


def ring_source(x):
    r = np.hypot(x[:, 0], x[:, 1])
    return (np.abs(r - 0.4) ** (-1 / 3) + np.abs(r - 0.8) ** (-1 / 3))[None]


def test_singular_rings_attract_refinement():
    hc = lshape(1)
    cfg = AdaptConfig(max_depth=2, max_iter=4)
    rep = adapt_loop(HodgeTask(HodgeLaplaceProblem(2, f=ring_source)), hc, cfg)
    cells = rep.iterations[-1].cells
    low = [c for c in cells if c.order == 1]
    assert low
    for c in low:
        r = np.hypot(*hc.coords(c.key).T)
        assert (r.min() <= 0.4 <= r.max()) or (r.min() <= 0.8 <= r.max()) or r.min() < 1e-9


def test_report_files(tmp_path):
    task = ProjectionTask(lambda x: np.exp(x[:, 0])[None])
    rep = adapt_loop(task, interval(2), AdaptConfig(max_iter=2))
    rep.write(tmp_path)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "report.csv").read_text())))
    assert len(rows) == len(rep.iterations)
    assert int(rows[0]["ndof"]) == rep.iterations[0].ndof
    cells = (tmp_path / "cells.csv").read_text().splitlines()
    assert cells[0].startswith("iteration,cell")


def test_cell_labels_are_stable():
    key = (2, (((0,), (1,)), ((0, 1), (3, 1))))
    assert cell_label(key) == "L2:0|0x3.1"


def test_final_orders_reproduce_last_iterate():
    hc = lshape(1)
    task = HodgeTask(HodgeLaplaceProblem(2, f=ring_source))
    rep = adapt_loop(task, hc, AdaptConfig(max_depth=2, max_iter=3))
    state = task.solve(hc, rep.orders)
    assert task.ndof(state) == rep.last.ndof
