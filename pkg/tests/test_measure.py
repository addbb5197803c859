import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from eqq.errors import EmptyMeasure, TailTooHeavy, ValidationError
from eqq.measure import (
    Gaussian,
    GridDensity,
    Mixture,
    SegmentSingular,
    TwoBlocks,
    UniformCube,
    UniformSet,
    build_grid,
    build_grid_auto,
    coarsen,
    density_functional,
    load_spec,
    moment,
    read_grid,
    spec_from_dict,
    spec_to_dict,
    write_grid,
)


def test_uniform_cube_cells_equal():
    g = build_grid(UniformCube(2), 4, ([0, 0], [1, 1]))
    assert g.shape == (4, 4)
    np.testing.assert_allclose(g.masses, 1 / 16, rtol=0, atol=1e-15)


def test_uniform_set_half_box():
    ind = np.array([[1], [0]], dtype=bool)  # x in [0, 1/2) kept, all y
    spec = UniformSet(2, ind, [0, 0], [1, 1])
    g = build_grid(spec, 4, ([0, 0], [1, 1]))
    flat = np.sort(g.masses.ravel())
    np.testing.assert_allclose(flat[:8], 0.0, atol=1e-15)
    np.testing.assert_allclose(flat[8:], 1 / 8, atol=1e-15)


def test_gaussian_cells_match_cdf_differences():
    g = build_grid(Gaussian(1, [0.0], 1.0), 64, ([-6], [6]))
    edges = np.linspace(-6, 6, 65)
    expect = np.diff(norm.cdf(edges))
    expect /= expect.sum()
    np.testing.assert_allclose(g.masses, expect, rtol=1e-12, atol=1e-17)


def test_gaussian_cells_match_monte_carlo_histogram():
    g = build_grid(Gaussian(1, [0.0], 1.0), 64, ([-6], [6]))
    N = 1_000_000
    x = np.random.default_rng(7).standard_normal(N)
    counts, _ = np.histogram(x, bins=np.linspace(-6, 6, 65))
    freq = counts / N
    se = np.sqrt(g.masses * (1 - g.masses) / N)
    big = g.masses > 1e-4
    assert np.all(np.abs(freq[big] - g.masses[big]) <= 3 * se[big] + 1e-12) or \
        np.mean(np.abs(freq[big] - g.masses[big]) <= 3 * se[big]) >= 0.99


def test_mass_conservation_all_kinds():
    specs = [
        UniformCube(3),
        Gaussian(2, [0.5, -0.5], 0.7),
        TwoBlocks(2, (2.0, 0.0), 0.3),
        SegmentSingular(2, (0.1, 0.2), (0.9, 0.7)),
        Mixture(((0.7, UniformCube(2)), (0.3, SegmentSingular(2, (0, 0), (1, 1))))),
    ]
    for spec in specs:
        g = build_grid_auto(spec, 500)
        assert abs(g.masses.sum() - spec.total) <= 1e-12


def test_singular_segment_support_declared():
    g = build_grid(SegmentSingular(2, (0.1, 0.15), (0.9, 0.15)), 10, ([0, 0], [1, 1]))
    sing = g.singular_support_cells
    # x-cells 1..8 of the second row carry the arc length, 1/8 each
    np.testing.assert_array_equal(sing, [10 * i + 1 for i in range(1, 9)])
    np.testing.assert_allclose(g.masses.ravel()[sing], 1 / 8)
    np.testing.assert_allclose(g.masses.ravel()[sing].sum(), 1.0)


def test_tail_too_heavy_and_truncate_ok():
    spec = Gaussian(1, [0.0], 1.0)
    with pytest.raises(TailTooHeavy):
        build_grid(spec, 16, ([-2], [2]))
    g = build_grid(spec, 16, ([-2], [2]), truncate_ok=True)
    assert abs(g.masses.sum() - 1.0) <= 1e-12


def test_empty_measure():
    ind = np.zeros((2, 2), bool)
    ind[0, 0] = True
    spec = UniformSet(2, ind, [0, 0], [1, 1])
    with pytest.raises(EmptyMeasure):
        build_grid(spec, 2, ([2, 2], [3, 3]))


def test_rectangular_cells_rejected():
    with pytest.raises(ValidationError):
        build_grid(UniformCube(2), (4, 8), ([0, 0], [1, 1]))


def test_invalid_specs():
    with pytest.raises(ValidationError):
        TwoBlocks(1, (0.5,))
    with pytest.raises(ValidationError):
        SegmentSingular(2, (0, 0), (0, 0))
    with pytest.raises(ValidationError):
        Mixture(((0.5, UniformCube(1)), (0.4, UniformCube(1))))


def test_moment_examples():
    g = GridDensity(2, (1, 1), [-0.5, -0.5], 1.0, [[1.0]], 1.0)
    assert moment(g, 2) == 0.0
    assert moment(build_grid(UniformCube(1), 2), 1) == pytest.approx(0.5, abs=1e-15)
    assert abs(moment(build_grid(UniformCube(2), 256), 2) - 2 / 3) <= 1e-4


def test_moment_monotone_in_theta():
    outside = GridDensity(1, (4,), [2.0], 0.5, [0.1, 0.2, 0.3, 0.4], 1.0)
    inside = GridDensity(1, (4,), [0.0], 0.2, [0.1, 0.2, 0.3, 0.4], 1.0)
    thetas = [1, 1.5, 2, 3, 5, 8]
    mo = [moment(outside, t) for t in thetas]
    mi = [moment(inside, t) for t in thetas]
    assert all(b >= a for a, b in zip(mo, mo[1:]))
    assert all(b <= a for a, b in zip(mi, mi[1:]))


def test_density_functional_examples():
    for d in (1, 2, 3):
        g = build_grid(UniformCube(d), 8)
        for b in (0.25, 0.5, 2 / 3, 1.0):
            assert density_functional(g, b) == pytest.approx(1.0, abs=1e-12)
    big = UniformSet(2, np.ones((1, 1), bool), [0, 0], [2, 2])
    g = build_grid(big, 16, ([0, 0], [2, 2]))
    assert density_functional(g, 0.5) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValidationError):
        density_functional(g, 0.0)


def test_density_functional_gaussian_quadrature():
    g = build_grid(Gaussian(2, [0, 0], 1.0), 256, ([-6, -6], [6, 6]))
    phi = lambda y, x: math.exp(-(x * x + y * y) / 2) / (2 * math.pi)
    oracle, _ = integrate.dblquad(lambda y, x: phi(y, x) ** 0.5, -12, 12, -12, 12, epsabs=1e-12)
    assert abs(density_functional(g, 0.5) / oracle - 1) <= 1e-3


def test_density_functional_refinement_exact_for_uniform_sets():
    ind = np.array([[1, 0], [1, 1]], bool)
    spec = UniformSet(2, ind, [0, 0], [1, 1])
    a = density_functional(build_grid(spec, 8, ([0, 0], [1, 1])), 0.5)
    b = density_functional(build_grid(spec, 16, ([0, 0], [1, 1])), 0.5)
    assert abs(a - b) <= 1e-12


def test_density_functional_dilation_identity():
    g = build_grid(UniformCube(2), 8)
    for lam in (0.5, 2.0, 3.7):
        for b in (0.3, 0.5, 0.9):
            lhs = density_functional(g.dilated(lam), b)
            assert lhs == pytest.approx(lam ** (2 * (1 - b)) * density_functional(g, b), rel=1e-9)


def test_density_functional_excludes_singular_cells():
    spec = Mixture(((0.7, UniformCube(2)), (0.3, SegmentSingular(2, (0.05, 0.5), (0.95, 0.5)))))
    g = build_grid(spec, 20, ([0, 0], [1, 1]))
    full = density_functional(g, 0.5)
    excl = density_functional(g, 0.5, exclude_singular_support=True)
    assert excl < full


def test_spec_json_roundtrip(tmp_path):
    objs = [
        {"kind": "gaussian", "d": 2, "mean": [0, 0], "sigma": 1.0},
        {"kind": "uniform_cube", "d": 3},
        {"kind": "two_blocks", "d": 2, "shift": [2, 0]},
        {"kind": "mixture", "parts": [{"w": 0.5, "kind": "uniform_cube", "d": 1},
                                      {"w": 0.5, "kind": "gaussian", "d": 1, "mean": [0], "sigma": 1}]},
    ]
    for obj in objs:
        spec = spec_from_dict(obj)
        assert spec_from_dict(spec_to_dict(spec)) == spec
    path = tmp_path / "s.json"
    path.write_text('{"kind":"uniform_cube","d":1}')
    assert load_spec(path) == UniformCube(1)


def test_grid_file_roundtrip(tmp_path):
    spec = Mixture(((0.6, Gaussian(2, [0.3, 0.2], 0.4)), (0.4, SegmentSingular(2, (0, 0), (1, 1)))))
    g = build_grid(spec, 32, ([-2, -2], [2, 2]), truncate_ok=True)
    write_grid(tmp_path / "g.json", g)
    r = read_grid(tmp_path / "g.json")
    assert r.shape == g.shape and r.d == g.d and r.h == g.h
    np.testing.assert_array_equal(r.masses, g.masses)
    np.testing.assert_array_equal(r.origin, g.origin)
    np.testing.assert_array_equal(r.singular_support_cells, g.singular_support_cells)
    assert r.total == g.total


def test_coarsen_preserves_mass():
    g = build_grid(Gaussian(2, [0, 0], 1.0), 64)
    c = coarsen(g, 2)
    assert c.shape == (32, 32) and c.h == 2 * g.h
    assert abs(c.masses.sum() - g.masses.sum()) <= 1e-12
    np.testing.assert_allclose(c.masses[0, 0], g.masses[:2, :2].sum())
