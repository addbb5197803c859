import math

import numpy as np
import pytest
from scipy import integrate

from eqq.asympt import (
    CSV_HEADER,
    SweepResult,
    SweepRow,
    bound_report,
    coefficient_estimate,
    distant_bound,
    rate_fit,
    sweep,
)
from eqq.errors import DegenerateFit, EmptySweep, ExponentOutOfRange, ValidationError
from eqq.measure import Gaussian, Mixture, SegmentSingular, TwoBlocks, UniformCube, build_grid
from eqq.quantize import OptimizerConfig


def synthetic(ns, errs, d=1, method="m"):
    return SweepResult([SweepRow(n, method, 2.0, d, e, n ** (1 / d) * e, 0, 1) for n, e in zip(ns, errs)], "syn")


def test_sweep_midpoint_exact():
    for p in (1, 2, 3):
        s = sweep(UniformCube(1), p, [1, 2, 4], ["midpoint_1d"])
        assert [r.n for r in s.rows] == [1, 2, 4]
        for r in s.rows:
            assert r.error == pytest.approx(1 / ((p + 1) ** (1 / p) * 2 * r.n), rel=1e-12)
            assert abs(r.scaled_error - r.n * r.error) <= 1e-12
            assert r.runtime_ms is None


def test_sweep_single_row_and_header():
    s = sweep(UniformCube(1), 2, [5], ["chunk_1d"])
    assert len(s.rows) == 1
    lines = s.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "n,method,p,d,error,scaled_error,seed,restarts,runtime_ms"
    assert lines[1].endswith(",")  # runtime blank without timing


def test_sweep_deterministic(tmp_path):
    cfg = OptimizerConfig(restarts=2, max_iters=15, seed=7)
    a = sweep(UniformCube(2), 2, [4, 8], ["lloyd_capacity"], cfg, out_path=tmp_path / "a.csv")
    b = sweep(UniformCube(2), 2, [4, 8], ["lloyd_capacity"], cfg, out_path=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.to_csv() == b.to_csv()
    assert a.grid_resolution == {4: (16, 16), 8: (23, 23)}


def test_sweep_timing_fills_runtime():
    s = sweep(UniformCube(1), 2, [2], ["midpoint_1d"], timing=True)
    assert s.rows[0].runtime_ms is not None and s.rows[0].runtime_ms >= 0


def test_sweep_validation():
    with pytest.raises(ValidationError):
        sweep(UniformCube(1), 2, [], ["midpoint_1d"])
    with pytest.raises(ValidationError):
        sweep(UniformCube(1), 2, [4, 2], ["midpoint_1d"])
    with pytest.raises(ValidationError):
        sweep(UniformCube(1), 0.5, [1], ["midpoint_1d"])


def test_sweep_failure_flushed_then_raised(tmp_path):
    out = tmp_path / "s.csv"
    with pytest.raises(ValidationError):
        sweep(UniformCube(2), 2, [4], ["midpoint_1d", "lloyd_capacity"],
              OptimizerConfig(restarts=1, max_iters=5), out_path=out)
    back = SweepResult.read(out)
    rows = {r.method: r for r in back.rows}
    assert rows["lloyd_capacity"].ok
    assert not rows["midpoint_1d"].ok and "validation" in rows["midpoint_1d"].failure
    assert math.isnan(rows["midpoint_1d"].error)


def test_sweep_csv_roundtrip(tmp_path):
    s = sweep(UniformCube(1), 3, [1, 3, 9], ["chunk_1d", "midpoint_1d"], timing=True)
    s.write(tmp_path / "s.csv")
    back = SweepResult.read(tmp_path / "s.csv")
    assert back.measure_id == s.measure_id == "uniform_cube_d1"
    assert back.grid_resolution == s.grid_resolution
    for a, b in zip(s.rows, back.rows):
        assert a == b


def test_coefficient_estimate_midpoint_constant():
    for p in (1, 2):
        s = sweep(UniformCube(1), p, [1, 2, 3, 8], ["midpoint_1d"])
        est = coefficient_estimate(s, 1)
        assert est.value == pytest.approx(1 / (2 * (p + 1) ** (1 / p)), rel=1e-12)
        assert all(est.value <= r.scaled_error for r in s.rows)


def test_coefficient_estimate_min_and_empty():
    s = synthetic([1, 2, 4], [0.5, 0.2, 0.15])
    est = coefficient_estimate(s)
    assert est.value == 0.4 and est.n == 2
    with pytest.raises(EmptySweep):
        coefficient_estimate(SweepResult([], "x"))


def test_rate_fit_synthetic():
    ns = [2, 4, 8, 16, 32, 64, 128]
    fit = rate_fit(synthetic(ns, [n**-0.5 for n in ns]))
    assert abs(fit.slope + 0.5) <= 1e-12
    assert fit.r2 == pytest.approx(1.0)
    assert (fit.n_min, fit.n_max) == (4, 128)  # smallest 20% dropped
    with pytest.raises(DegenerateFit):
        rate_fit(synthetic([1, 2, 3], [0.1, 0.1, 0.1]))
    with pytest.raises(ValidationError):
        rate_fit(synthetic([1, 2], [0.1, 0.05]))


def test_rate_fit_log_factor():
    ns = np.array([8, 16, 32, 64, 128, 256])
    errs = (1 + np.log(ns)) ** 0.5 * ns**-0.5
    plain = rate_fit(synthetic(ns.tolist(), errs.tolist(), d=2))
    corrected = rate_fit(synthetic(ns.tolist(), errs.tolist(), d=2), log_power=0.5)
    assert abs(corrected.slope + 0.5) <= 1e-12
    assert plain.slope > -0.5


def test_rate_fit_two_blocks_shallow():
    ns = [3, 5, 9, 17, 33, 65]
    s = sweep(TwoBlocks(1, (2.0,), 0.5), 2, ns, ["chunk_1d"])
    assert rate_fit(s).slope > -0.8


def test_bound_report_uniform():
    for d in (2, 3):
        g = build_grid(UniformCube(d), 8)
        rep = bound_report(g, 1, q_lower=0.3, q_upper=0.35)
        assert rep.zador_functional == pytest.approx(1.0, abs=1e-12)
        assert rep.empirical_functional_full == pytest.approx(1.0, abs=1e-12)
        assert rep.empirical_functional_excl == pytest.approx(1.0, abs=1e-12)
        assert rep.rhs_U == pytest.approx(0.35, abs=1e-12)
        assert rep.rhs_L <= rep.rhs_U
    rep = bound_report(build_grid(UniformCube(2), 8), 1)
    assert rep.rhs_L is None and rep.rhs_U is None and rep.rhs_zador is None


def test_bound_report_gaussian_quadrature():
    g = build_grid(Gaussian(2, [0, 0], 1.0), 256)
    rep = bound_report(g, 1)
    phi = lambda y, x: math.exp(-(x * x + y * y) / 2) / (2 * math.pi)
    emp, _ = integrate.dblquad(lambda y, x: phi(y, x) ** 0.5, -12, 12, -12, 12)
    zad, _ = integrate.dblquad(lambda y, x: phi(y, x) ** (2 / 3), -12, 12, -12, 12)
    assert abs(rep.empirical_functional_full / emp - 1) <= 1e-3
    assert abs(rep.zador_functional / zad - 1) <= 1e-3


def test_bound_report_singular_exclusion():
    spec = Mixture(((0.7, UniformCube(2)), (0.3, SegmentSingular(2, (0.05, 0.5), (0.95, 0.5)))))
    g = build_grid(spec, 32, ([0, 0], [1, 1]))
    sing_mass = g.masses.ravel()[g.singular_support_cells].sum()
    assert sing_mass >= 0.3
    rep = bound_report(g, 1, q_lower=0.4, q_upper=0.4)
    assert rep.empirical_functional_excl < rep.empirical_functional_full
    assert rep.rhs_L <= rep.rhs_U


def test_bound_report_exponent_range():
    g = build_grid(UniformCube(2), 8)
    with pytest.raises(ExponentOutOfRange):
        bound_report(g, 2)
    rep = bound_report(g, 3, empirical=False, q_lower=0.5)
    assert rep.empirical_functional_full is None
    assert rep.rhs_zador == pytest.approx(0.5)


def test_distant_bound_examples():
    for n in (2, 4, 10, 64):
        assert distant_bound(n, 1, 0.5, 2) == 0.0
    assert distant_bound(3, 1, 0.5, 1) == pytest.approx(1 / 12, abs=1e-15)
    assert distant_bound(3, 1, 0.5, 2) == pytest.approx(0.204124, abs=1e-6)
    assert distant_bound(3, 1, 0.3, 1) == pytest.approx(0.5 * 0.1 / 3)
    with pytest.raises(ValidationError):
        distant_bound(0, 1, 0.5, 1)
