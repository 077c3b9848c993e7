import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from spatint.geometry import Window
from spatint.kernels import KernelSpec, box_integral, density, gradient, kernel_at_zero, parse_kernel


def radial_mass(k):
    """Total kernel mass from a one-dimensional radial integral (independent of box_integral)."""
    d = k.dim
    sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    upper = 1.0 if k.family == "beta" else np.inf
    val, _ = integrate.quad(lambda r: density(k, np.r_[r, np.zeros(d - 1)]) * r ** (d - 1), 0, upper)
    return sphere * val


def test_box_kernel_at_origin():
    assert density(KernelSpec.beta(0), [0, 0]) == pytest.approx(1 / math.pi, rel=1e-14)


def test_gaussian_at_origin():
    assert density(KernelSpec.gaussian(), [0, 0]) == pytest.approx(1 / (2 * math.pi), rel=1e-14)


def test_epanechnikov_constant_by_polar_quadrature():
    # integral of (1 - r^2) over the unit disc
    disc, _ = integrate.quad(lambda r: (1 - r * r) * 2 * math.pi * r, 0, 1)
    assert disc == pytest.approx(math.pi / 2, rel=1e-12)
    assert density(KernelSpec.beta(1), [0, 0]) == pytest.approx(1 / disc, rel=1e-12)
    assert 1 / disc == pytest.approx(2 / math.pi, rel=1e-12)


def test_kernel_at_zero_values():
    assert kernel_at_zero(KernelSpec.gaussian()) == pytest.approx(1 / (2 * math.pi))
    assert kernel_at_zero(KernelSpec.beta(0)) == pytest.approx(1 / math.pi)
    # Gamma(5/2) / (sqrt(pi) Gamma(2)) = 3/4
    assert kernel_at_zero(KernelSpec.beta(1, dim=1)) == pytest.approx(0.75, rel=1e-14)


def test_beta_support_is_closed_ball():
    k = KernelSpec.beta(0)
    assert density(k, [1.0, 0.0]) > 0
    assert density(k, [1.0 + 1e-12, 0.0]) == 0


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("k", ["gaussian", "beta:0", "beta:1", "beta:2"])
def test_kernels_integrate_to_one(k, d):
    assert radial_mass(parse_kernel(k, d)) == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=100, deadline=None)
@given(x=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       k=st.sampled_from(["gaussian", "beta:0", "beta:1", "beta:2.5"]))
def test_density_is_even(x, k):
    ks = parse_kernel(k)
    assert density(ks, x) == density(ks, [-v for v in x])


@pytest.mark.parametrize("gamma", [1.5, 2, 3])
def test_beta_gradient_matches_finite_differences(gamma, rng):
    k = KernelSpec.beta(gamma)
    eps = 1e-6
    for _ in range(20):
        r = rng.uniform(0, 0.95)
        t = rng.uniform(0, 2 * math.pi)
        x = np.array([r * math.cos(t), r * math.sin(t)])
        fd = np.array([(density(k, x + eps * e) - density(k, x - eps * e)) / (2 * eps) for e in np.eye(2)])
        assert np.allclose(fd, gradient(k, x), atol=1e-5)


def test_gaussian_gradient_matches_finite_differences(rng):
    k = KernelSpec.gaussian()
    x = rng.normal(size=2)
    eps = 1e-6
    fd = np.array([(density(k, x + eps * e) - density(k, x - eps * e)) / (2 * eps) for e in np.eye(2)])
    assert np.allclose(fd, gradient(k, x), atol=1e-8)


def test_parse_kernel():
    assert parse_kernel("gaussian") == KernelSpec.gaussian()
    assert parse_kernel("beta:2") == KernelSpec.beta(2)
    assert parse_kernel("box").is_box
    for bad in ("cauchy", "beta:x", "beta:-1"):
        with pytest.raises(ValueError):
            parse_kernel(bad)


def test_gaussian_box_integral_small_scale_limit(unit):
    assert box_integral(KernelSpec.gaussian(), [0.5, 0.5], 1e-4, unit) == pytest.approx(1.0, abs=1e-6)


def test_box_kernel_fully_contained_is_exactly_one(unit):
    assert box_integral(KernelSpec.beta(0), [0.5, 0.5], 0.25, unit) == 1.0


def test_gaussian_one_dimensional_box():
    w = Window([0.0], [1.0])
    phi_diff = 0.5 * math.erf(1 / math.sqrt(2))  # Phi(1) - Phi(0)
    assert phi_diff == pytest.approx(0.341345, abs=1e-6)
    assert box_integral(KernelSpec.gaussian(1), [0.0], 1.0, w) == pytest.approx(phi_diff, rel=1e-12)


def test_gaussian_box_integral_far_tail_no_cancellation():
    w = Window([10.0, 0.0], [11.0, 1.0])
    val = box_integral(KernelSpec.gaussian(), [0.0, 0.5], 1.0, w)
    assert 0 < val < 1e-20


def test_box_integral_rejects_nonpositive_scale(unit):
    with pytest.raises(ValueError):
        box_integral(KernelSpec.gaussian(), [0.5, 0.5], 0.0, unit)


@pytest.mark.parametrize("gamma", [0, 1, 2, 0.5])
def test_beta_box_integral_half_and_quarter(gamma, unit):
    k = KernelSpec.beta(gamma)
    assert box_integral(k, [0.0, 0.5], 0.2, unit) == pytest.approx(0.5, abs=1e-8)
    assert box_integral(k, [0.0, 0.0], 0.2, unit) == pytest.approx(0.25, abs=1e-8)


def _beta_mass_oracle(gamma, a, b):
    """Mass of the planar Beta kernel in the box (a, b) by adaptive nested quadrature."""
    C = KernelSpec.beta(gamma).normalizer
    x0, x1 = max(a[0], -1.0), min(b[0], 1.0)

    def inner(x):
        s = math.sqrt(max(0.0, 1 - x * x))
        lo, hi = max(a[1], -s), min(b[1], s)
        if hi <= lo:
            return 0.0
        return integrate.quad(lambda y: (1 - x * x - y * y) ** gamma if gamma else 1.0, lo, hi,
                              epsabs=1e-13)[0]

    val, _ = integrate.quad(inner, x0, x1, epsabs=1e-12, limit=200)
    return C * val


@pytest.mark.parametrize("gamma", [0, 1, 2])
@pytest.mark.parametrize("center", [(0.05, 0.5), (0.03, 0.08), (0.5, 0.95)])
def test_beta_box_integral_against_quadrature(gamma, center, unit):
    s = 0.2
    a = (-np.asarray(center)) / s
    b = (1 - np.asarray(center)) / s
    ref = _beta_mass_oracle(gamma, a, b)
    assert box_integral(KernelSpec.beta(gamma), center, s, unit) == pytest.approx(ref, abs=1e-4)


def test_box_integral_exact_segment_area(unit):
    # disc of radius 0.2 clipped 0.05 from its centre: circular segment formula
    a = 0.25
    ref = (math.pi - (math.acos(a) - a * math.sqrt(1 - a * a))) / math.pi
    assert box_integral(KernelSpec.beta(0), [0.05, 0.5], 0.2, unit) == pytest.approx(ref, abs=2e-5)


@pytest.mark.parametrize("k", ["gaussian", "beta:0", "beta:2"])
def test_box_integral_bounded(k, rng, unit):
    ks = parse_kernel(k)
    centers = rng.uniform(size=(200, 2))
    scales = rng.uniform(0.01, 2.0, size=200)
    vals = box_integral(ks, centers, scales, unit)
    assert np.all(vals > 0) and np.all(vals <= 1 + 1e-9)


@pytest.mark.parametrize("k", ["gaussian", "beta:0", "beta:1", "beta:2"])
def test_box_integral_small_scale_limit_any_center(k, rng, unit):
    ks = parse_kernel(k)
    centers = rng.uniform(0.01, 0.99, size=(50, 2))
    vals = box_integral(ks, centers, 1e-4, unit)
    assert np.allclose(vals, 1.0, atol=1e-6)


def test_box_integral_three_dimensional():
    w = Window.unit(3)
    k = KernelSpec.beta(1, dim=3)
    assert box_integral(k, [0.0, 0.5, 0.5], 0.2, w) == pytest.approx(0.5, abs=1e-4)
    assert box_integral(k, [0.5, 0.5, 0.5], 0.2, w) == 1.0
