"""Refit on a selected structure, coefficient covariance, SBLL curves and confidence bands."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm

from .basis import bspline_basis, place_knots, rule_of_thumb_knots
from .data import center
from .errors import BandwidthTooLarge, IndexNotNonlinear, ModelSingular
from .kernel import EPANECHNIKOV, kde, local_linear_grid, rot_bandwidth


@dataclass
class RefitFit:
    """Unpenalized least-squares fit on a fixed structure.

    ``alpha`` and ``beta`` are full-length (zeros off the selected sets);
    ``gamma`` and ``bases`` are keyed by the 0-based X index of each
    nonlinear component. Nonlinear components (pure or linear-and-nonlinear)
    are represented by their order-``d`` spline alone.
    """

    structure: object
    alpha: np.ndarray
    beta: np.ndarray
    gamma: dict
    bases: dict
    sigma2_hat: float
    residuals: np.ndarray
    z_mean: np.ndarray
    y_mean: float
    x_means: np.ndarray
    design: np.ndarray = field(repr=False)
    columns: list = field(repr=False)
    order: int = 4

    @property
    def n(self):
        return self.residuals.shape[0]

    def component(self, l, x_raw, nu=0):
        """``phi*_l`` (or its ``nu``-th derivative) at raw covariate values."""
        if l not in self.bases:
            raise IndexNotNonlinear(f"x index {l} is not in the nonlinear set")
        return self.bases[l].curve(self.gamma[l], x_raw, nu)

    def predict(self, z, x_raw):
        """Predicted response on the original scale."""
        z = np.asarray(z, dtype=float)
        x_raw = np.asarray(x_raw, dtype=float)
        out = np.full(x_raw.shape[0] if x_raw.ndim == 2 else z.shape[0], self.y_mean)
        s = self.structure
        if s.s_z:
            idx = list(s.s_z)
            out += (z[:, idx] - self.z_mean[idx]) @ self.alpha[idx]
        if s.s_x_pl:
            idx = list(s.s_x_pl)
            out += (x_raw[:, idx] - self.x_means[idx]) @ self.beta[idx]
        for l in s.s_x_n:
            out += self.component(l, x_raw[:, l])
        return out

    def to_dict(self):
        return {
            "structure": self.structure.to_dict(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": {str(l): g.tolist() for l, g in self.gamma.items()},
            "bases": {str(l): b.to_dict() for l, b in self.bases.items()},
            "sigma2_hat": self.sigma2_hat,
            "z_mean": self.z_mean.tolist(),
            "y_mean": self.y_mean,
            "x_means": self.x_means.tolist(),
            "order": self.order,
        }


def _as_centered(ds):
    return ds if ds.centered else center(ds)


def refit(ds, structure, d=4, n_knots=4, spacing="quantile"):
    """Least squares on the selected Z, pure-linear X and order-``d`` spline columns.

    Parameters
    ----------
    ds : Dataset
        Centered or raw (raw data are centered first).
    structure : ModelStructure
    d : int
        Spline order for the nonlinear components.
    n_knots : int or "auto"
        Interior knots per component; ``"auto"`` uses :func:`rule_of_thumb_knots`
        with ``s`` the number of nonlinear components.

    Returns
    -------
    RefitFit
    """
    ds = _as_centered(ds)
    n = ds.n
    z_mean = ds.z.mean(axis=0) if ds.p1 else np.zeros(0)
    raw_x = ds.raw_x()
    cols, names, bases = [], [], {}
    for k in structure.s_z:
        cols.append((ds.z[:, k] - z_mean[k])[:, None])
        names.append(ds.z_names[k])
    for l in structure.s_x_pl:
        cols.append(ds.x[:, [l]])
        names.append(ds.x_names[l])
    n_nl = len(structure.s_x_n)
    if n_nl:
        N = rule_of_thumb_knots(n, d, n_nl) if n_knots == "auto" else int(n_knots)
    for l in structure.s_x_n:
        blk = bspline_basis(raw_x[:, l], place_knots(raw_x[:, l], N, spacing), d)
        bases[l] = blk
        cols.append(blk.values)
        names += [f"{ds.x_names[l]}[B{j + 1}]" for j in range(blk.n_cols)]
    D = np.hstack(cols) if cols else np.zeros((n, 0))
    q = D.shape[1]
    dof = n - len(structure.s_z) - len(structure.s_x)
    if q >= n or dof <= 0:
        raise ModelSingular(f"{q} refit columns for {n} observations")

    if q:
        Q, R = np.linalg.qr(D)
        diag = np.abs(np.diag(R))
        scale = np.linalg.norm(D, axis=0)
        bad = np.flatnonzero(diag <= 1e-10 * np.maximum(scale, 1e-300))
        if bad.size:
            raise ModelSingular("refit design is rank deficient at column(s) "
                                + ", ".join(names[j] for j in bad), [names[j] for j in bad])
        coef = solve_triangular(R, Q.T @ ds.y)
    else:
        coef = np.zeros(0)
    resid = ds.y - D @ coef

    alpha = np.zeros(ds.p1)
    beta = np.zeros(ds.p2)
    gamma = {}
    pos = 0
    for k in structure.s_z:
        alpha[k] = coef[pos]
        pos += 1
    for l in structure.s_x_pl:
        beta[l] = coef[pos]
        pos += 1
    for l in structure.s_x_n:
        m = bases[l].n_cols
        gamma[l] = coef[pos:pos + m]
        pos += m
    sigma2 = float(resid @ resid) / dof
    return RefitFit(structure, alpha, beta, gamma, bases, sigma2, resid, z_mean,
                    float(ds.y_mean), np.asarray(ds.x_means), D, names, d)


def coef_covariance(fit, ds=None, structure=None):
    """Covariance of the refit linear coefficients over ``s_z`` then ``s_x_pl``.

    ``sigma2 [(T - That)'(T - That)]^{-1}`` with ``T`` the selected linear
    columns and ``That`` their projection onto the spline columns.
    Returns ``(cov, labels)``.
    """
    structure = structure or fit.structure
    k = len(structure.s_z) + len(structure.s_x_pl)
    labels = fit.columns[:k]
    if k == 0:
        return np.zeros((0, 0)), labels
    T = fit.design[:, :k]
    S = fit.design[:, k:]
    if S.shape[1]:
        proj, *_ = np.linalg.lstsq(S, T, rcond=None)
        T = T - S @ proj
    M = T.T @ T
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ModelSingular("linear block is collinear with the spline columns", labels) from None
    if np.min(np.abs(np.diag(L))) <= 1e-10 * math.sqrt(np.max(np.diag(M))):
        raise ModelSingular("linear block is collinear with the spline columns", labels)
    Linv = np.linalg.inv(L)
    cov = fit.sigma2_hat * (Linv.T @ Linv)
    return 0.5 * (cov + cov.T), labels


def pseudo_responses(ds, structure, fit, l):
    """``y - Z alpha* - X_PL beta* - sum_{l' != l} phi*_{l'}`` on the centered scale."""
    if l not in structure.s_x_n:
        raise IndexNotNonlinear(f"x index {l} is not in the nonlinear set")
    ds = _as_centered(ds)
    out = ds.y.copy()
    for k in structure.s_z:
        out -= (ds.z[:, k] - fit.z_mean[k]) * fit.alpha[k]
    for j in structure.s_x_pl:
        out -= ds.x[:, j] * fit.beta[j]
    raw_x = ds.raw_x()
    for j in structure.s_x_n:
        if j != l:
            out -= fit.component(j, raw_x[:, j])
    return out


def tau_n(h, kspec=EPANECHNIKOV):
    """``sqrt(ln h^-2) + ln(||K'|| / (2 pi ||K||)) / sqrt(ln h^-2)``."""
    L = math.log(h**-2)
    return math.sqrt(L) + math.log(kspec.deriv_l2norm / (2 * math.pi * kspec.l2norm)) / math.sqrt(L)


def scb_multiplier(h, alpha=0.05, kspec=EPANECHNIKOV):
    """``tau_n - (ln h^-2)^{-1/2} ln(-0.5 ln(1 - alpha))``."""
    return tau_n(h, kspec) - math.log(-0.5 * math.log(1 - alpha)) / math.sqrt(math.log(h**-2))


@dataclass
class SbllCurve:
    grid: np.ndarray
    estimate: np.ndarray
    bias: np.ndarray
    stderr: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    scb_lo: np.ndarray
    scb_hi: np.ndarray
    h: float
    interior: tuple
    alpha: float = 0.05
    multiplier: float = float("nan")

    def columns(self):
        return {k: getattr(self, k) for k in
                ("grid", "estimate", "bias", "stderr", "ci_lo", "ci_hi", "scb_lo", "scb_hi")}


def default_grid(x, h, n_points=101):
    a, b = float(np.min(x)), float(np.max(x))
    if a + h >= b - h:
        raise BandwidthTooLarge(f"bandwidth {h:g} leaves no interior on [{a:g}, {b:g}]")
    return np.linspace(a + h, b - h, n_points)


def sbll_band(x, yy, h, grid, sigma, alpha=0.05, bias_fn=None, kspec=EPANECHNIKOV):
    """Local-linear estimate of ``yy`` on ``x`` with pointwise CI and SCB over ``grid``.

    ``bias_fn(grid)`` supplies the second derivative used in the bias term;
    without it the bias is zero.
    """
    n = x.shape[0]
    a, b = float(x.min()), float(x.max())
    if a + h >= b - h:
        raise BandwidthTooLarge(f"bandwidth {h:g} leaves no interior on [{a:g}, {b:g}]")
    if grid is None:
        grid = default_grid(x, h)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    eps = 1e-12 * (b - a)
    if np.any(grid < a + h - eps) or np.any(grid > b - h + eps):
        raise BandwidthTooLarge(f"grid leaves the interior [{a + h:g}, {b - h:g}]")
    est, _ = local_linear_grid(x, yy, h, grid)
    f = kde(x, h, grid)
    v = kspec.l2norm * sigma / np.sqrt(f)
    se = v / math.sqrt(n * h)
    bias = np.zeros_like(est) if bias_fn is None else kspec.mu2 * bias_fn(grid) / 2 * h * h
    z = norm.ppf(1 - alpha / 2)
    Q = scb_multiplier(h, alpha, kspec)
    return SbllCurve(grid, est, bias, se, est - bias - z * se, est - bias + z * se,
                     est - Q * se, est + Q * se, float(h), (a + h, b - h), alpha, Q)


def sbll_curve(ds, fit, structure, l, grid=None, alpha=0.05, h=None):
    """Spline-backfitted local-linear estimate of component ``l`` with CI and SCB.

    The grid is in raw covariate units and must lie in ``[a + h, b - h]``;
    by default 101 equally spaced interior points are used. The bias term
    uses the refit spline's second derivative (zero for order 2).
    """
    if l not in structure.s_x_n:
        raise IndexNotNonlinear(f"x index {l} is not in the nonlinear set")
    ds = _as_centered(ds)
    x = ds.raw_x()[:, l]
    yy = pseudo_responses(ds, structure, fit, l)
    if h is None:
        h = rot_bandwidth(x, yy)
    bias_fn = None if fit.order < 3 else (lambda g: fit.component(l, g, nu=2))
    return sbll_band(x, yy, h, grid, math.sqrt(fit.sigma2_hat), alpha, bias_fn)


def oracle_pseudo_responses(ds, truth, l):
    """Response minus the true other components, on the centered scale.

    The true components are centered empirically, matching the centering of
    the response, so the result targets the same curve as the feasible one.
    """
    ds = _as_centered(ds)
    out = ds.y.copy()
    if ds.p1:
        zc = ds.z - ds.z.mean(axis=0)
        out -= zc @ truth.alpha
    raw_x = ds.raw_x()
    for j in range(ds.p2):
        if j == l or truth.funcs[j] is None:
            continue
        v = truth.funcs[j](raw_x[:, j])
        out -= v - v.mean()
    return out


def oracle_sbll(ds, truth, l, grid=None, h=None, alpha=0.05, sigma=None):
    """Infeasible SBLL curve built from the true nuisance components.

    ``h`` defaults to the rule-of-thumb bandwidth on the oracle pseudo-responses;
    ``sigma`` defaults to the true noise level.
    """
    ds = _as_centered(ds)
    x = ds.raw_x()[:, l]
    yy = oracle_pseudo_responses(ds, truth, l)
    if h is None:
        h = rot_bandwidth(x, yy)
    sigma = truth.sigma if sigma is None else sigma
    return sbll_band(x, yy, h, grid, sigma, alpha)


def write_curve_csv(curve, path):
    """Plot-data export: x, estimate, bias, stderr, ci_lo, ci_hi, scb_lo, scb_hi."""
    cols = curve.columns()
    keys = list(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + keys[1:])
        for i in range(cols["grid"].shape[0]):
            w.writerow([repr(float(cols[k][i])) for k in keys])
