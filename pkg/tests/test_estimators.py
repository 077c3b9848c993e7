import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pattern
from spatint.estimators import (IntensityField, ScaleFactors, adaptive_lower_bound, edge_weights, estimate_adaptive,
                                estimate_fixed, pilot_estimates, rasterize, scale_factors)
from spatint.geometry import PointPattern, Window, make_grid
from spatint.kernels import KernelSpec, parse_kernel

G = KernelSpec.gaussian()


def naive_gaussian(points, bw, x, weights=None):
    """Plain-loop fixed or adaptive Gaussian estimate at one location."""
    total = 0.0
    for i, p in enumerate(points):
        b = bw[i] if np.ndim(bw) else bw
        r2 = ((x[0] - p[0]) ** 2 + (x[1] - p[1]) ** 2) / (b * b)
        term = math.exp(-0.5 * r2) / (2 * math.pi * b * b)
        total += term / (weights[i] if weights is not None else 1.0)
    return total


def test_single_point_at_itself(unit):
    p = PointPattern([[0.5, 0.5]], unit)
    assert estimate_fixed(p, 0.1, G, (0.5, 0.5)) == pytest.approx(100 / (2 * math.pi), rel=1e-14)


def test_box_kernel_example(unit):
    p = PointPattern([[0.5, 0.5]], unit)
    k = KernelSpec.beta(0)
    assert estimate_fixed(p, 0.2, k, (0.5, 0.5)) == pytest.approx(1 / (math.pi * 0.04), rel=1e-14)
    assert estimate_fixed(p, 0.2, k, (0.9, 0.5)) == 0.0


def test_empty_pattern_is_zero(unit):
    p = PointPattern(np.empty((0, 2)), unit)
    assert estimate_fixed(p, 0.1, G, (0.3, 0.3)) == 0.0
    f = rasterize(p, G, make_grid(unit, 8), 0.1)
    assert np.all(f.values == 0)


def test_fixed_matches_naive_loop(rng, unit):
    p = random_pattern(rng, 25)
    x = rng.uniform(size=(10, 2))
    got = estimate_fixed(p, 0.07, G, x)
    ref = [naive_gaussian(p.points, 0.07, xi) for xi in x]
    assert np.allclose(got, ref, rtol=1e-12)


def test_local_edge_correction_matches_naive_loop(rng, unit):
    p = random_pattern(rng, 15)
    h = 0.1
    # Gaussian mass in the unit square from erf, per point
    def mass(c):
        m = 1.0
        for v in c:
            m *= 0.5 * (math.erf((1 - v) / (h * math.sqrt(2))) - math.erf(-v / (h * math.sqrt(2))))
        return m
    wts = [mass(c) for c in p.points]
    assert np.allclose(edge_weights(p, h, G), wts, rtol=1e-12)
    x = (0.02, 0.4)
    assert estimate_fixed(p, h, G, x, ec="local") == pytest.approx(naive_gaussian(p.points, h, x, wts), rel=1e-12)


def test_global_edge_correction_divides_by_location_mass(rng, unit):
    p = random_pattern(rng, 15)
    h = 0.1
    x = np.array([0.0001, 0.5])
    raw = estimate_fixed(p, h, G, x)
    assert estimate_fixed(p, h, G, x, ec="global") == pytest.approx(2 * raw, rel=1e-3)


def test_invalid_inputs(unit):
    p = PointPattern([[0.5, 0.5]], unit)
    with pytest.raises(ValueError):
        estimate_fixed(p, 0.0, G, (0.5, 0.5))
    with pytest.raises(ValueError):
        estimate_fixed(p, 0.1, G, (1.5, 0.5))
    with pytest.raises(ValueError):
        estimate_fixed(p, 0.1, G, (0.5, 0.5), ec="reflect")
    with pytest.raises(ValueError):
        estimate_adaptive(p, 0.1, ScaleFactors.ones(1), G, (0.5, 0.5), ec="global")
    with pytest.raises(ValueError):
        estimate_adaptive(p, 0.1, ScaleFactors.ones(2), G, (0.5, 0.5))
    with pytest.raises(ValueError):
        ScaleFactors([1.0, 0.0])


def test_adaptive_matches_naive_loop(rng, unit):
    p = random_pattern(rng, 20)
    c = rng.uniform(0.5, 2.0, size=20)
    x = rng.uniform(size=(5, 2))
    got = estimate_adaptive(p, 0.05, ScaleFactors(c), G, x)
    ref = [naive_gaussian(p.points, 0.05 * c, xi) for xi in x]
    assert np.allclose(got, ref, rtol=1e-12)


@pytest.mark.parametrize("k", ["gaussian", "beta:0", "beta:2"])
@pytest.mark.parametrize("ec", ["none", "local"])
def test_unit_factors_reduce_to_fixed(k, ec, rng):
    ks = parse_kernel(k)
    p = random_pattern(rng, 30)
    x = rng.uniform(size=(50, 2))
    fixed = estimate_fixed(p, 0.08, ks, x, ec=ec)
    adapt = estimate_adaptive(p, 0.08, ScaleFactors.ones(30), ks, x, ec=ec)
    assert np.allclose(adapt, fixed, rtol=1e-12, atol=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([-0.5, -0.25, 0.0, -1.0]),
       n=st.integers(1, 200))
def test_scale_factor_geometric_mean_is_one(seed, alpha, n):
    pilot = np.random.default_rng(seed).lognormal(3, 2, size=n)
    sf = scale_factors(pilot, alpha)
    assert abs(math.exp(np.mean(np.log(sf.c))) - 1) < 1e-10
    assert np.allclose(sf.c, (pilot / math.exp(np.mean(np.log(pilot)))) ** alpha, rtol=1e-9)


def test_scale_factors_examples():
    assert np.allclose(scale_factors([4.0, 1.0], -0.5).c, [0.5 ** 0.5, 2 ** 0.5], rtol=1e-14)
    assert np.all(scale_factors([5.0, 5.0, 5.0]).c == 1.0)
    assert np.all(scale_factors([3.0, 7.0], 0.0).c == 1.0)
    with pytest.raises(ValueError):
        scale_factors([1.0, -1.0])
    with pytest.raises(ValueError):
        scale_factors([])


def test_scale_factors_no_overflow_at_extreme_pilots():
    sf = scale_factors([1e-300, 1e300], -0.5)
    assert np.all(np.isfinite(sf.c))
    assert sf.c[0] * sf.c[1] == pytest.approx(1.0)


def test_pilot_uses_local_correction(rng):
    p = random_pattern(rng, 10)
    assert np.allclose(pilot_estimates(p, 0.1, G), estimate_fixed(p, 0.1, G, p.points, ec="local"), rtol=0)
    with pytest.raises(ValueError):
        pilot_estimates(PointPattern(np.empty((0, 2)), p.window), 0.1, G)


@pytest.mark.parametrize("k", ["gaussian", "beta:0", "beta:2"])
def test_adaptive_lower_bound_holds(k, rng):
    ks = parse_kernel(k)
    p = random_pattern(rng, 40)
    sf = scale_factors(rng.uniform(1, 50, size=40))
    for h in (0.01, 0.1, 1.0):
        vals = estimate_adaptive(p, h, sf, ks, p.points)
        assert np.all(vals >= adaptive_lower_bound(p, h, sf, ks) * (1 - 1e-12))


@pytest.mark.parametrize("k, gamma", [("gaussian", None), ("beta", 2)])
@pytest.mark.parametrize("h", [0.03, 0.08, 0.2])
def test_local_correction_preserves_mass(k, gamma, h, rng, unit):
    ks = G if gamma is None else KernelSpec.beta(gamma)
    grid = make_grid(unit, 256)
    p = random_pattern(rng, 30)
    fixed = rasterize(p, ks, grid, h, ec="local")
    assert fixed.integral() == pytest.approx(30, rel=5e-3)
    sf = scale_factors(pilot_estimates(p, 0.1, ks))
    adapt = rasterize(p, ks, grid, h, sf, ec="local")
    assert adapt.integral() == pytest.approx(30, rel=5e-3)


@pytest.mark.parametrize("ec", ["none", "local", "global"])
def test_raster_matches_pointwise(ec, rng, unit):
    p = random_pattern(rng, 12)
    grid = make_grid(unit, (9, 7))
    f = rasterize(p, G, grid, 0.1, ec=ec)
    assert f.values.shape == (9, 7)
    direct = estimate_fixed(p, 0.1, G, grid.centers, ec=ec).reshape(9, 7)
    assert np.allclose(f.values, direct, rtol=1e-12)


def test_raster_beta_matches_pointwise_and_threads(rng, unit):
    p = random_pattern(rng, 12)
    k = KernelSpec.beta(2)
    grid = make_grid(unit, 70)
    sf = scale_factors(pilot_estimates(p, 0.2, k))
    a = rasterize(p, k, grid, 0.1, sf, threads=1)
    b = rasterize(p, k, grid, 0.1, sf, threads=3)
    assert np.array_equal(a.values, b.values)
    direct = estimate_adaptive(p, 0.1, sf, k, grid.centers, ec="local").reshape(70, 70)
    assert np.allclose(a.values, direct, rtol=1e-12)


def test_raster_window_mismatch(rng):
    p = random_pattern(rng, 3)
    with pytest.raises(ValueError):
        rasterize(p, G, make_grid(Window([0, 0], [2, 1]), 4), 0.1)


def test_ascii_grid_layout(tmp_path, unit):
    grid = make_grid(unit, (3, 2))
    f = IntensityField(grid, np.arange(6.0).reshape(3, 2))
    path = tmp_path / "f.asc"
    f.to_ascii_grid(path)
    lines = path.read_text().splitlines()
    assert lines[:2] == ["ncols 3", "nrows 2"]
    assert lines[4:6] == ["dx 0.3333333333333333", "dy 0.5"]
    assert lines[6] == "NODATA_value -9999"
    # top row is the largest y
    assert lines[7].split() == ["1.0", "3.0", "5.0"]
    assert lines[8].split() == ["0.0", "2.0", "4.0"]


def test_ascii_grid_square_cells(tmp_path, unit):
    f = IntensityField(make_grid(unit, 4), np.ones((4, 4)))
    f.to_ascii_grid(tmp_path / "f.asc")
    assert "cellsize 0.25" in (tmp_path / "f.asc").read_text()


def test_field_csv(tmp_path, unit):
    f = IntensityField(make_grid(unit, 2), np.array([[1.0, 2.0], [3.0, 4.0]]))
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert lines[1:] == ["0.25,0.25,1.0", "0.25,0.75,2.0", "0.75,0.25,3.0", "0.75,0.75,4.0"]
    assert f.integral() == pytest.approx(2.5)
