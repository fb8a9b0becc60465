import csv

import pytest

from hpfeec import cli
from hpfeec.meshes import load_mesh


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_entity():
    assert cli.parse_entity("edge:3", 2) == (1, 3)
    assert cli.parse_entity("cell:0", 3) == (3, 0)
    assert cli.parse_entity("2:5", 3) == (2, 5)
    with pytest.raises(ValueError):
        cli.parse_entity("edge", 2)
    with pytest.raises(ValueError):
        cli.parse_entity("blob:1", 2)


def test_basis_command(tmp_path, capsys):
    code, out, _ = run(["basis", "--n", "2", "--k", "1", "--r", "2", "--dump", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "dims_n2_k1.csv")))
    assert rows == [["order", "family", "dimension"], ["1", "minus", "3"], ["2", "minus", "8"]]
    assert (tmp_path / "basis_n2_k1_r2.pkl").exists()


def test_refine_command(tmp_path, capsys):
    out_mesh = tmp_path / "r.msh"
    code, out, _ = run(["refine", "--mesh", "two-triangles", "--entity", "edge:3", "--out", str(out_mesh)], capsys)
    assert code == 0
    assert len(load_mesh(out_mesh).leaf_cells()) == 5


def test_solve_and_report(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out, _ = run(["solve", "--problem", "projection", "--mesh", "interval:2", "--source", "tanh",
                        "--adapt", "--max-iter", "2", "--out", str(out_dir)], capsys)
    assert code == 0
    for name in ("report.csv", "cells.csv", "solution.vtu", "mesh.msh"):
        assert (out_dir / name).exists()
    code, out, _ = run(["report", str(out_dir)], capsys)
    assert code == 0 and "global_error" in out and len(out.splitlines()) >= 3


def test_uniform_hodge_solve(tmp_path, capsys):
    code, out, _ = run(["solve", "--mesh", "square:1", "--order", "2", "--source", "smooth",
                        "--out", str(tmp_path / "h")], capsys)
    assert code == 0 and "wrote" in out


def test_errors_return_code_two(tmp_path, capsys):
    code, _, err = run(["refine", "--mesh", "nowhere", "--entity", "edge:0", "--out", str(tmp_path / "x")], capsys)
    assert code == 2 and err.startswith("error:")
    code, _, err = run(["report", str(tmp_path / "missing")], capsys)
    assert code == 2


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "hpfeec", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "solve" in res.stdout
