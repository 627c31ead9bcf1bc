import json

import numpy as np
import pytest

from gasketlab import build_graph
from gasketlab import io
from gasketlab.cli import main
from gasketlab.hydro import bump_profile


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_graph(capsys, tmp_path):
    code, out, _ = run(["graph", "--level", 2, "--out", tmp_path / "g.json"], capsys)
    assert code == 0
    assert "15 vertices, 27 edges" in out
    assert (tmp_path / "g.manifest.json").exists()


def test_appendix_converges(capsys, tmp_path):
    f = tmp_path / "seq.csv"
    code, _, _ = run(["appendix", "--mode", "diagonal", "--steps", 60, "--out", f], capsys)
    assert code == 0
    header, rows = io.read_csv(f)
    assert header == ["k", "a_k", "b_k"] and len(rows) == 61
    assert abs(rows[-1][1] - 3 / 7) < 1e-12 and abs(rows[-1][2] + 3 / 14) < 1e-12


def test_appendix_corner(capsys, tmp_path):
    f = tmp_path / "c.csv"
    assert run(["appendix", "--mode", "corner", "--gamma", 0.0, "--steps", 80, "--out", f], capsys)[0] == 0
    _, rows = io.read_csv(f)
    assert abs(rows[-1][1] - 17 / 14) < 1e-12


def test_harmonic_and_green(capsys, tmp_path):
    code, out, _ = run(["harmonic", "--level", 3, "--boundary", "1,0,0", "--out", tmp_path / "h.csv"], capsys)
    assert code == 0 and "E_0 of the corner data = 2.0" in out
    u = io.read_field(tmp_path / "h.csv", build_graph(3))
    assert u.max() == 1.0
    code, _, _ = run(["green", "--level", 3, "--source", "1:1,1", "--out", tmp_path / "c.csv"], capsys)
    assert code == 0


def test_solve_with_profile(capsys, tmp_path):
    g1 = build_graph(1)
    io.write_field(tmp_path / "u0.csv", g1, bump_profile(1))
    code, out, _ = run(["solve", "--level", 3, "--phi", "zr-geometric", "--u0", tmp_path / "u0.csv",
                        "--T", 0.01, "--out", tmp_path / "tr.csv", "--figure", tmp_path / "tr.png"], capsys)
    assert code == 0 and "True" in out
    header, rows = io.read_csv(tmp_path / "tr.csv")
    assert header[:3] == ["t", "l2_sq", "energy_integral"]
    assert (tmp_path / "tr.png").stat().st_size > 0
    man = json.loads((tmp_path / "tr.manifest.json").read_text())
    assert "u0.csv" in man["inputs"]


def test_solve_custom_table(capsys, tmp_path):
    u = np.linspace(0, 2, 9)
    io.write_csv(tmp_path / "phi.csv", ("u", "phi"), [(a, a / (1 + a)) for a in u])
    code, _, _ = run(["solve", "--level", 2, "--phi", "custom-table", "--phi-table", tmp_path / "phi.csv",
                      "--T", 0.01], capsys)
    assert code == 0
    code, _, err = run(["solve", "--level", 2, "--phi", "custom-table", "--T", 0.01], capsys)
    assert code == 1 and "invalid input" in err


def test_simulate_byte_identical_data(capsys, tmp_path):
    args = ["simulate", "--level", 3, "--rate", "indicator", "--alpha", "0.5,1,1.5", "--init", "stationary",
            "--T", 0.02, "--replicas", 3, "--seed", 5, "--observe", "density,oneblock:1"]
    assert run(args + ["--out", tmp_path / "a.json"], capsys)[0] == 0
    assert run(args + ["--out", tmp_path / "b.json", "--threads", 2], capsys)[0] == 0
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert json.dumps(a["data"], sort_keys=True) == json.dumps(b["data"], sort_keys=True)
    meta = a["metadata"]
    assert meta["seed"] == 5 and meta["rng"] == "numpy.random.PCG64" and meta["events"] > 0
    assert "wall_s" in meta
    c_args = list(args)
    c_args[c_args.index(5)] = 6
    run(c_args + ["--out", tmp_path / "c.json"], capsys)
    c = json.loads((tmp_path / "c.json").read_text())
    assert c["data"] != a["data"]


def test_simulate_table_rate(capsys, tmp_path):
    io.write_csv(tmp_path / "g.csv", ("k", "g"), [(0, 0.0), (1, 1.0), (2, 1.5)])
    code, _, _ = run(["simulate", "--level", 2, "--rate", f"table:{tmp_path / 'g.csv'}", "--alpha", "1,0,0",
                      "--T", 0.01, "--observe", "timeavg"], capsys)
    assert code == 0


def test_hydro(capsys, tmp_path):
    io.write_field(tmp_path / "p.csv", build_graph(1), bump_profile(1))
    out = tmp_path / "r.csv"
    code, _, _ = run(["hydro", "--levels", "2,3", "--u0", tmp_path / "p.csv", "--alpha", "0,0,0", "--T", 0.01,
                      "--replicas", 4, "--seed", 1, "--out", out], capsys)
    assert code == 0
    header, rows = io.read_csv(out)
    assert header == ["level", "replicas", "t", "h1m_err_mean", "h1m_err_se", "h1m_init_mean", "h1m_init_se",
                      "F_mean", "F_se", "G_mean", "G_se", "wall_s"]
    assert [r[0] for r in rows] == [2, 3]
    code, _, err = run(["hydro", "--levels", "2", "--u0", tmp_path / "p.csv", "--alpha", "1,0,0",
                        "--replicas", 4], capsys)
    assert code == 1 and "differ" in err


def test_verify_exact(capsys, tmp_path):
    code, out, _ = run(["verify", "--suite", "exact", "--out", tmp_path / "v.json"], capsys)
    assert code == 0
    assert out.count("PASS") == 6 and "FAIL" not in out


@pytest.mark.parametrize(
    "argv",
    [
        ["graph"],
        ["graph", "--level", "2", "--bogus"],
        ["nosuch"],
        ["harmonic", "--level", "2", "--boundary", "1,2"],
        ["solve", "--level", "2", "--T", "-1"],
        ["graph", "--level", "-3"],
        ["simulate", "--level", "2", "--T", "0.1", "--rate", "quadratic"],
        ["green", "--level", "2", "--source", "9,9"],
        ["solve", "--level", "2", "--T", "0.1", "--u0", "/nonexistent/u0.csv"],
    ],
)
def test_invalid_input_exits_1(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    assert code == 1
    assert capsys.readouterr().err


def test_numerical_failure_exits_2(capsys, tmp_path, monkeypatch):
    from gasketlab import pde
    from gasketlab.errors import DivergenceError

    def boom(problem):
        raise DivergenceError("blew up")

    monkeypatch.setattr(pde, "integrate", boom)
    code, _, err = run(["solve", "--level", 2, "--T", 0.01], capsys)
    assert code == 2 and "numerical failure" in err
