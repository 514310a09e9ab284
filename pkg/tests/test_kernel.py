import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from smile.errors import DegenerateColumn, InsufficientLocalData
from smile.kernel import EPANECHNIKOV, epanechnikov, kde, kernel_constants, local_linear, \
    local_linear_grid, rot_bandwidth


def K(u):
    return 0.75 * (1 - u * u) if abs(u) <= 1 else 0.0


def test_epanechnikov_values():
    np.testing.assert_allclose(epanechnikov([0.0, 1.0, -1.0, 0.5, 2.0]), [0.75, 0, 0, 0.5625, 0])


def test_kernel_symmetry(rng):
    u = rng.uniform(-2, 2, 1000)
    np.testing.assert_array_equal(epanechnikov(u), epanechnikov(-u))


def test_kernel_constants_match_quadrature():
    ks = kernel_constants()
    r_k = quad(lambda u: K(u) ** 2, -1, 1, epsabs=1e-13)[0]
    mu2 = quad(lambda u: u * u * K(u), -1, 1, epsabs=1e-13)[0]
    r_dk = quad(lambda u: (-1.5 * u) ** 2, -1, 1, epsabs=1e-13)[0]
    assert abs(ks.l2norm_sq - r_k) <= 1e-8
    assert abs(ks.mu2 - mu2) <= 1e-8
    assert abs(ks.deriv_l2norm_sq - r_dk) <= 1e-8


def rot_oracle(x, y):
    # same closed form written independently with numpy.polyfit on raw x
    n = x.size
    c = np.polyfit(x, y, 4)
    res = y - np.polyval(c, x)
    s2 = res @ res / (n - 5)
    m2 = np.polyval(np.polyder(c, 2), x)
    a, b = x.min(), x.max()
    h = (0.6 * s2 * (b - a) / (0.04 * (m2 @ m2))) ** 0.2
    return min(max(h, (b - a) / n), (b - a) / 2)


def test_rot_bandwidth_matches_formula(rng):
    x = rng.uniform(0, 1, 500)
    y = np.sin(2 * np.pi * x) + rng.normal(0, 0.5, 500)
    assert abs(rot_bandwidth(x, y) - rot_oracle(x, y)) <= 1e-12


def test_rot_bandwidth_clamps(rng):
    x = rng.uniform(0, 1, 200)
    a, b = x.min(), x.max()
    assert rot_bandwidth(x, 3 * x**4 - x**2 + 1) == pytest.approx((b - a) / 200)
    assert rot_bandwidth(x, 2 * x + 1) == pytest.approx((b - a) / 2)
    with pytest.raises(DegenerateColumn):
        rot_bandwidth(np.r_[np.zeros(10), np.ones(10)], rng.standard_normal(20))


def test_rot_bandwidth_shift_invariant(rng):
    x = rng.uniform(size=300)
    y = np.cos(3 * x) + rng.normal(0, 0.3, 300)
    assert rot_bandwidth(x, y + 17.0) == pytest.approx(rot_bandwidth(x, y), rel=1e-10)


def test_local_linear_constant_and_linear(rng):
    x = rng.uniform(size=50)
    m, s = local_linear(x, np.full(50, 4.0), 0.3, 0.5)
    assert m == pytest.approx(4.0, abs=1e-12) and s == pytest.approx(0.0, abs=1e-10)
    m, s = local_linear(x, 2 * x, 0.3, 0.4)
    assert m == pytest.approx(0.8, abs=1e-12) and s == pytest.approx(2.0, abs=1e-10)


def test_local_linear_normal_equations_oracle():
    x = np.array([0.0, 0.15, 0.3, 0.45, 0.6, 0.8, 1.0])
    y = np.array([1.0, 0.4, -0.3, 0.2, 1.1, 0.9, -0.5])
    h, x0 = 0.5, 0.4
    w = np.array([K((xi - x0) / h) / h for xi in x])
    X = np.column_stack([np.ones(7), x - x0])
    coef = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * y))
    m, s = local_linear(x, y, h, x0)
    assert m == pytest.approx(coef[0], abs=1e-12)
    assert s == pytest.approx(coef[1], abs=1e-12)


def test_local_linear_insufficient_data():
    x = np.array([0.0, 0.1, 5.0, 5.1])
    with pytest.raises(InsufficientLocalData):
        local_linear(x, x, 0.5, 2.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_local_linear_affine_equivariance(seed, a, b):
    r = np.random.default_rng(seed)
    x = r.uniform(size=60)
    y = r.standard_normal(60)
    g = np.linspace(0.25, 0.75, 5)
    m, s = local_linear_grid(x, y, 0.25, g)
    m2, s2 = local_linear_grid(x, a * y + b, 0.25, g)
    np.testing.assert_allclose(m2, a * m + b, atol=1e-9)
    np.testing.assert_allclose(s2, a * s, atol=1e-8)


def test_local_linear_exact_on_interior(rng):
    x = rng.uniform(-0.5, 0.5, 300)
    h = 0.12
    g = np.linspace(x.min() + h, x.max() - h, 50)
    m, s = local_linear_grid(x, 1.5 - 3 * x, h, g)
    np.testing.assert_allclose(m, 1.5 - 3 * g, atol=1e-10)
    np.testing.assert_allclose(s, -3.0, atol=1e-9)


def test_kde_integrates_to_one(rng):
    x = rng.normal(size=400)
    g = np.linspace(-6, 6, 4001)
    f = kde(x, 0.3, g)
    assert np.trapezoid(f, g) == pytest.approx(1.0, abs=1e-4)
    assert EPANECHNIKOV.l2norm == pytest.approx(np.sqrt(0.6))
