import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smile import _gcd_py
from smile.errors import AllGroupsExcluded, InvalidArgs
from smile.solver import (BACKEND, CoefTriple, GroupedDesign, GroupWeights, PenaltySpec,
                          adaptive_weights, fit_path, fit_penalized, group_soft_threshold,
                          kkt_residual, lambda_max, lambda_path, objective)


def random_design(r, n=30, n_scalar=4, n_spline=3, nb=3):
    z = r.standard_normal((n, n_scalar // 2))
    xl = r.standard_normal((n, n_scalar - n_scalar // 2))
    splines = [r.standard_normal((n, nb)) for _ in range(n_spline)]
    y = r.standard_normal(n) * 2
    return GroupedDesign.from_arrays(y, z=z, x_linear=xl, splines=splines, n_basis=nb)


def random_weights(r, d, p_inf=0.15):
    def draw(k):
        w = r.uniform(0.2, 3.0, k)
        w[r.uniform(size=k) < p_inf] = np.inf
        return w
    return GroupWeights(draw(d.p1), draw(d.p2), draw(d.p2))


def test_group_soft_threshold_examples():
    z = np.array([3.0, 4.0])
    np.testing.assert_array_equal(group_soft_threshold(z, 0.0), z)
    np.testing.assert_array_equal(group_soft_threshold(z, 5.0), [0.0, 0.0])
    np.testing.assert_allclose(group_soft_threshold(z, 2.5), [1.5, 2.0], atol=1e-15)
    with pytest.raises(InvalidArgs):
        group_soft_threshold(z, -1.0)


def test_zero_lambda_matches_least_squares(rng):
    n = 40
    d = GroupedDesign.from_arrays(rng.standard_normal(n), z=rng.standard_normal((n, 5)),
                                  x_linear=rng.standard_normal((n, 3)),
                                  splines=[rng.standard_normal((n, 4)) for _ in range(3)])
    fit = fit_penalized(d, PenaltySpec(), tol=1e-12)
    Q, R = np.linalg.qr(d.X)
    ls = np.linalg.solve(R, Q.T @ d.y)
    np.testing.assert_allclose(d.to_flat(fit), ls, atol=1e-8)


def test_single_orthonormal_group_closed_form(rng):
    n = 50
    B = np.linalg.qr(rng.standard_normal((n, 4)))[0]
    y = rng.standard_normal(n) * 3
    d = GroupedDesign.from_arrays(y, splines=[B])
    for lam in (0.0, 0.5, 1.5, 10.0):
        fit = fit_penalized(d, PenaltySpec.common(lam), tol=1e-12)
        np.testing.assert_allclose(fit.gamma[0], group_soft_threshold(B.T @ y, lam), atol=1e-10)


def test_large_lambda_gives_zero(rng):
    d = random_design(rng)
    lam = 1.01 * lambda_max(d)
    fit = fit_penalized(d, PenaltySpec.common(lam))
    assert np.all(d.to_flat(fit) == 0.0)
    assert kkt_residual(d, PenaltySpec.common(1e6), CoefTriple.zeros(d.p1, d.p2, d.n_basis)) == 0.0


def kkt_oracle(D, groups, y, theta, thresh):
    r = y - D @ theta
    worst = 0.0
    for (s, e), t in zip(groups, thresh):
        g = D[:, s:e].T @ r
        th = theta[s:e]
        nt = np.sqrt(np.sum(th**2))
        if np.isinf(t):
            v = 0.0 if nt == 0 else np.inf
        elif nt > 0:
            v = np.sqrt(np.sum((g - t * th / nt) ** 2))
        else:
            v = max(np.sqrt(np.sum(g**2)) - t, 0.0)
        worst = max(worst, v)
    return worst


def test_kkt_residual_matches_bruteforce(rng):
    n = 20
    d = GroupedDesign.from_arrays(rng.standard_normal(n), z=rng.standard_normal((n, 6)),
                                  x_linear=rng.standard_normal((n, 6)),
                                  splines=[rng.standard_normal((n, 3)) for _ in range(6)])
    assert d.X.shape[1] == 30
    pen = PenaltySpec(0.7, 1.3, 2.1, GroupWeights(rng.uniform(0.5, 2, 6), rng.uniform(0.5, 2, 6),
                                                  rng.uniform(0.5, 2, 6)))
    theta = rng.standard_normal(30)
    theta[rng.uniform(size=30) < 0.3] = 0.0
    groups = [(s, s + k) for s, k in zip(d.starts, d.sizes)]
    oracle = kkt_oracle(d.X, groups, d.y, theta, d.thresholds(pen))
    assert abs(kkt_residual(d, pen, d.from_flat(theta)) - oracle) <= 1e-12


def test_adaptive_weights_examples():
    coef = CoefTriple(np.array([0.5, 0.0]), np.array([-4.0, 1.0]),
                      [np.array([0.6, 0.8]), np.array([0.48, 0.64])])
    w = adaptive_weights(coef)
    np.testing.assert_allclose(w.alpha, [2.0, np.inf])
    np.testing.assert_allclose(w.beta, [0.25, 1.0])
    # reciprocal group norm: ||(0.6, 0.8)|| = 1, ||(0.48, 0.64)|| = 0.8
    np.testing.assert_allclose(w.gamma, [1.0, 1.25])


def test_lambda_path_examples(rng):
    n = 25
    B = np.linalg.qr(rng.standard_normal((n, 3)))[0]
    y = rng.standard_normal(n)
    d = GroupedDesign.from_arrays(y, splines=[B])
    lmax = np.linalg.norm(B.T @ y)
    np.testing.assert_allclose(lambda_path(d, n_points=2), [lmax, 1e-4 * lmax], rtol=1e-12)
    grid = lambda_path(random_design(rng), n_points=30)
    assert np.all(np.diff(grid) < 0)
    with pytest.raises(AllGroupsExcluded):
        lambda_path(d, GroupWeights(np.zeros(0), np.zeros(1), np.array([np.inf])))
    with pytest.raises(InvalidArgs):
        lambda_path(d, n_points=1)


def test_infinite_weight_groups_stay_zero(rng):
    for _ in range(10):
        d = random_design(rng)
        w = random_weights(rng, d, p_inf=0.4)
        fit = fit_penalized(d, PenaltySpec.common(0.05 * lambda_max(d), w))
        theta = d.to_flat(fit)
        for m, t in enumerate(d.thresholds(PenaltySpec.common(1.0, w))):
            if np.isinf(t):
                assert np.all(theta[d.group_slice(m)] == 0.0)


def test_objective_nonincreasing_per_sweep(rng):
    d = random_design(rng, n=40)
    pen = PenaltySpec.common(0.2 * lambda_max(d), random_weights(rng, d, 0.0))
    thresh = d.thresholds(pen)
    theta = np.zeros(d.X.shape[1])
    r = d.y.copy()
    order = np.arange(d.n_groups, dtype=np.intp)
    prev = objective(d, pen, theta)
    for _ in range(30):
        _gcd_py.sweep(d.X, r, theta, d.starts, d.sizes, d.voff, d.evals, d.evecs, thresh, order,
                      np.zeros(64))
        cur = objective(d, pen, theta)
        assert cur <= prev + 1e-10
        prev = cur


def test_warm_start_no_worse_than_cold(rng):
    d = random_design(rng, n=40)
    lams = lambda_path(d, n_points=15)
    path = fit_path(d, lams, tol=1e-10)
    for pt in path[::3]:
        pen = PenaltySpec.common(pt.lam)
        cold = fit_penalized(d, pen, tol=1e-10)
        assert objective(d, pen, pt.theta) <= objective(d, pen, cold) + 1e-8


def test_group_order_permutation_invariance(rng):
    n = 35
    blocks = [(f"z{k}", "Zlinear", rng.standard_normal((n, 1)), k) for k in range(3)]
    blocks += [(f"s{l}", "Xspline", rng.standard_normal((n, 3)), l) for l in range(3)]
    y = rng.standard_normal(n) * 2
    a = GroupedDesign(blocks, y, 3, 3, 3)
    b = GroupedDesign(blocks[::-1], y, 3, 3, 3)
    pen = PenaltySpec.common(0.1 * lambda_max(a))
    fa = fit_penalized(a, pen, tol=1e-11)
    fb = fit_penalized(b, pen, tol=1e-11)
    np.testing.assert_allclose(fa.alpha, fb.alpha, atol=1e-8)
    for ga, gb in zip(fa.gamma, fb.gamma):
        np.testing.assert_allclose(ga, gb, atol=1e-8)


def test_beats_random_feasible_points():
    r = np.random.default_rng(11)
    for _ in range(3):
        n = 30
        d = GroupedDesign.from_arrays(r.standard_normal(n) * 2,
                                      splines=[r.standard_normal((n, 3)) for _ in range(5)])
        pen = PenaltySpec.common(0.2 * lambda_max(d))
        best = objective(d, pen, fit_penalized(d, pen, tol=1e-10))
        ls = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
        cand = ls[None, :] * r.uniform(0, 1.2, (10000, 1)) + r.normal(0, 0.3, (10000, 15))
        vals = [objective(d, pen, c) for c in cand]
        assert best <= min(vals) + 1e-10


def test_qr_factors_reproduce_blocks(rng):
    d = random_design(rng)
    for m, (Q, R) in enumerate(d.qr_factors):
        np.testing.assert_allclose(Q @ R, d.X[:, d.group_slice(m)], atol=1e-10)


def test_with_response_shares_design(rng):
    d = random_design(rng)
    y2 = rng.standard_normal(d.n)
    e = d.with_response(y2)
    assert e.X is d.X and np.array_equal(e.y, y2) and not np.array_equal(d.y, y2)


def test_design_validation(rng):
    with pytest.raises(InvalidArgs):
        GroupedDesign([("a", "Zlinear", rng.standard_normal((10, 2)), 0)], np.zeros(10), 1, 0, 1)
    with pytest.raises(InvalidArgs):
        GroupedDesign([("a", "Other", rng.standard_normal((10, 1)), 0)], np.zeros(10), 1, 0, 1)
    with pytest.raises(InvalidArgs):
        PenaltySpec(-1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), frac=st.floats(0.0, 1.0))
def test_kkt_certified_property(seed, frac):
    r = np.random.default_rng(seed)
    d = random_design(r, n=40)
    w = random_weights(r, d)
    try:
        lam = frac * lambda_max(d, w)
    except AllGroupsExcluded:
        return
    pen = PenaltySpec(lam * r.uniform(0.5, 1.5), lam * r.uniform(0.5, 1.5), lam * r.uniform(0.5, 1.5), w)
    fit = fit_penalized(d, pen, tol=1e-7)
    assert kkt_residual(d, pen, fit) <= 1e-6


@pytest.mark.skipif(BACKEND != "cython", reason="compiled kernel not built")
def test_backends_agree(rng):
    from smile import _gcd
    d = random_design(rng, n=60, n_scalar=10, n_spline=8, nb=4)
    thresh = d.thresholds(PenaltySpec.common(0.1 * lambda_max(d), random_weights(rng, d)))
    order = np.arange(d.n_groups, dtype=np.intp)
    out = []
    for fn in (_gcd.sweep, _gcd_py.sweep):
        theta = np.zeros(d.X.shape[1])
        r = d.y.copy()
        for _ in range(15):
            fn(d.X, r, theta, d.starts, d.sizes, d.voff, d.evals, d.evecs, thresh, order,
               np.zeros(4 * 4))
        out.append(theta)
    np.testing.assert_allclose(out[0], out[1], atol=1e-12)


def test_pure_python_fallback_selected_by_env():
    env = dict(os.environ, SMILE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from smile.solver import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
