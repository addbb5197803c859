import json
import os
import subprocess
import sys

import numpy as np
import pytest

from eqq.asympt import SweepResult
from eqq.cli import RunConfig, main, validate
from eqq.fileio import read_json
from eqq.measure import UniformCube, build_grid, read_grid
from eqq.transport import read_cloud

SPECS = os.path.join(os.path.dirname(__file__), "..", "specs")
U1 = os.path.join(SPECS, "uniform_cube_1d.json")
U2 = os.path.join(SPECS, "uniform_cube_2d.json")


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_quantize_midpoint_stdout(capsys):
    code, out, _ = run(["quantize", "--spec", U1, "--n", 4, "--p", 2, "--method", "midpoint"], capsys)
    assert code == 0
    obj = json.loads(out)
    np.testing.assert_allclose(np.array(obj["points"])[:, 0], [0.125, 0.375, 0.625, 0.875])
    assert obj["method"] == "midpoint_1d"


def test_grid_quantize_error_roundtrip(tmp_path, capsys):
    g, c = tmp_path / "g.json", tmp_path / "c.csv"
    assert run(["grid", "--spec", U2, "--resolution", 8, "--output", g], capsys)[0] == 0
    back = read_grid(g)
    ref = build_grid(UniformCube(2), 8)
    assert np.abs(back.masses - ref.masses).max() <= 1e-12
    # a cloud on the 64 cell centers matches the grid exactly
    c.write_text("x_1,x_2\n" + "".join(f"{float(x)!r},{float(y)!r}\n" for x, y in ref.centers()))
    code, out, _ = run(["error", "--grid", g, "--cloud", c, "--p", 2, "--mode", "capacity"], capsys)
    assert code == 0
    assert json.loads(out)["cost"] == 0.0
    code, out, _ = run(["error", "--grid", g, "--cloud", c, "--p", 2, "--mode", "free"], capsys)
    assert json.loads(out)["cost"] == 0.0
    code, out, _ = run(["error", "--grid", g, "--cloud", c, "--p", 1, "--mode", "wb",
                        "--omega-lo", "0,0", "--omega-hi", "1,1"], capsys)
    assert code == 0 and json.loads(out)["cost"] == 0.0

    q = tmp_path / "q.csv"
    code, _, _ = run(["quantize", "--grid", g, "--n", 4, "--p", 2, "--method", "capacity",
                      "--restarts", 2, "--output", q], capsys)
    assert code == 0
    cloud = read_cloud(q)
    res = read_json(str(q) + ".result.json")
    assert cloud.n == 4 and res["n"] == 4 and res["cost"] == res["trace"][-1]


def test_w1d_mode(tmp_path, capsys):
    g, c = tmp_path / "g.json", tmp_path / "c.csv"
    run(["grid", "--spec", U1, "--resolution", 64, "--output", g], capsys)
    c.write_text("x_1\n0.5\n")
    code, out, _ = run(["error", "--grid", g, "--cloud", c, "--p", 2, "--mode", "w1d"], capsys)
    assert code == 0
    assert json.loads(out)["cost_pow_p"] == pytest.approx(1 / 12, rel=1e-12)


def test_sweep_coeff_report(tmp_path, capsys):
    s = tmp_path / "s.csv"
    code, _, _ = run(["sweep", "--spec", U1, "--p", 2, "--n-list", "1,2,4", "--method", "midpoint",
                      "--output", s], capsys)
    assert code == 0
    assert s.read_text().splitlines()[0] == "n,method,p,d,error,scaled_error,seed,restarts,runtime_ms"
    assert len(SweepResult.read(s).rows) == 3
    cj = tmp_path / "coeff.json"
    assert run(["coeff", "--sweep", s, "--output", cj], capsys)[0] == 0
    assert read_json(cj)["coefficient"] == pytest.approx(1 / (2 * 3**0.5), rel=1e-12)
    rj = tmp_path / "rep.json"
    assert run(["report", "--spec", U2, "--resolution", 8, "--p", 1, "--q-upper", 0.3,
                "--output", rj], capsys)[0] == 0
    rep = read_json(rj)
    assert rep["rhs_U"] == pytest.approx(0.3) and rep["empirical_functional_full"] == pytest.approx(1.0)


def test_exit_codes_and_stderr_json(tmp_path, capsys):
    code, _, err = run(["report", "--spec", U2, "--resolution", 8, "--p", 3], capsys)
    assert code == 2
    obj = json.loads(err)
    assert obj["error"] == "validation" and len(obj["detail"]) == 1
    code, _, err = run(["quantize", "--spec", tmp_path / "missing.json", "--n", 2, "--p", 2,
                        "--method", "chunk"], capsys)
    assert code == 2 and json.loads(err)["error"] == "validation"
    code, _, err = run(["quantize", "--spec", U2, "--n", 4, "--p", 2, "--method", "capacity",
                        "--resolution", 8, "--limit", 10], capsys)
    assert code == 3 and json.loads(err)["error"] == "solver_limit_exceeded"
    code, _, err = run(["bogus"], capsys)
    assert code == 2 and json.loads(err.splitlines()[-1])["error"] == "usage"
    c = tmp_path / "c.csv"
    c.write_text("x_1,x_2\n0.5,0.5\n")
    code, _, err = run(["error", "--spec", U1, "--resolution", 8, "--cloud", c, "--p", 2], capsys)
    assert code == 2 and json.loads(err)["error"] == "dimension_mismatch"


def test_validate_examples():
    ok = RunConfig("quantize", spec_path=U1, n=4, p=2.0, methods=("midpoint_1d",))
    assert validate(ok) == []
    bad = RunConfig("report", spec_path=U2, resolution=(8,), p=3.0, d=2)
    assert len(validate(bad)) == 1
    hexd3 = RunConfig("quantize", spec_path=U2, n=4, p=2.0, methods=("hex_2d",), d=3)
    assert len(validate(hexd3)) == 1
    assert validate(RunConfig("nope")) == ["unknown command 'nope'"]
    many = RunConfig("sweep", p=0.5, n_list=(4, 2))
    assert len(validate(many)) >= 4


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "eqq.cli", *map(str, args)], cwd=cwd,
                          capture_output=True, text=True)


def test_sweep_twice_byte_identical(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        r = _cli(["sweep", "--spec", U2, "--p", 2, "--n-list", "4,8", "--method", "capacity",
                  "--restarts", 2, "--max-iters", 10, "--seed", 7, "--output", tmp_path / name], tmp_path)
        assert r.returncode == 0, r.stderr
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
