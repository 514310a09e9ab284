"""Epanechnikov kernel, rule-of-thumb bandwidth and local-linear fits."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumn, InsufficientLocalData, InvalidArgs, SingularPilotFit


@dataclass(frozen=True)
class KernelSpec:
    """Kernel functionals used by the bandwidth and band formulas."""

    l2norm_sq: float
    mu2: float
    deriv_l2norm_sq: float

    @property
    def l2norm(self):
        return float(np.sqrt(self.l2norm_sq))

    @property
    def deriv_l2norm(self):
        return float(np.sqrt(self.deriv_l2norm_sq))


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def kernel_constants():
    # int K^2 = 3/5, int u^2 K = 1/5, int (K')^2 = int (3u/2)^2 = 3/2
    return KernelSpec(l2norm_sq=0.6, mu2=0.2, deriv_l2norm_sq=1.5)


EPANECHNIKOV = kernel_constants()


def rot_bandwidth(x, y, kspec=EPANECHNIKOV):
    """Rule-of-thumb bandwidth for local-linear regression.

    A global quartic pilot ``m`` is fitted by least squares, giving
    ``sigma^2 = RSS / (n - 5)``; then

        h = [ R(K) sigma^2 (b - a) / (mu2(K)^2 sum_i m''(x_i)^2) ] ** (1/5)

    clamped to ``[(b - a) / n, (b - a) / 2]``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.shape[0]
    if n < 10 or y.shape[0] != n:
        raise InvalidArgs("rot_bandwidth needs at least 10 paired observations")
    a, b = float(x.min()), float(x.max())
    if np.unique(x).size < 5:
        raise DegenerateColumn("need at least 5 distinct covariate values for the quartic pilot")
    lo, hi = (b - a) / n, (b - a) / 2.0

    # quartic in the rescaled variable s = (x - mid) / half for conditioning
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    s = (x - mid) / half
    V = np.vander(s, 5, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(V, y - y.mean(), rcond=None)
    if rank < 5:
        raise SingularPilotFit("quartic pilot design is rank deficient")
    resid = y - y.mean() - V @ coef
    sigma2 = float(resid @ resid) / (n - 5)
    m2 = (2 * coef[2] + 6 * coef[3] * s + 12 * coef[4] * s * s) / half**2
    curv = float(m2 @ m2)

    # curvature below rounding level of the pilot is treated as exactly zero
    scale = float(np.std(y)) + np.finfo(float).tiny
    if np.sqrt(curv / n) * (b - a) ** 2 <= 1e-9 * scale:
        return hi
    h = (kspec.l2norm_sq * sigma2 * (b - a) / (kspec.mu2**2 * curv)) ** 0.2
    return float(min(max(h, lo), hi))


def _moments(x, y, h, x0):
    d = x[None, :] - x0[:, None]
    w = epanechnikov(d / h) / h
    s0 = w.sum(axis=1)
    s1 = (w * d).sum(axis=1)
    s2 = (w * d * d).sum(axis=1)
    t0 = w @ y
    t1 = (w * d) @ y
    return w, s0, s1, s2, t0, t1


def local_linear_grid(x, y, h, grid):
    """Vectorized local-linear fit; returns ``(intercepts, slopes)`` over ``grid``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if h <= 0:
        raise InvalidArgs("bandwidth must be positive")
    out_m = np.empty(grid.shape[0])
    out_s = np.empty(grid.shape[0])
    # chunk the grid to bound the n x g weight matrix
    step = max(1, 2_000_000 // max(x.shape[0], 1))
    for lo in range(0, grid.shape[0], step):
        g = grid[lo:lo + step]
        w, s0, s1, s2, t0, t1 = _moments(x, y, h, g)
        det = s0 * s2 - s1 * s1
        support = w > 0
        for j in np.flatnonzero(det <= 1e-14 * np.maximum(s0 * s2, np.finfo(float).tiny)):
            if np.unique(x[support[j]]).size < 2:
                raise InsufficientLocalData(
                    f"fewer than 2 distinct points within h={h:g} of x0={g[j]:g}")
        out_m[lo:lo + step] = (s2 * t0 - s1 * t1) / det
        out_s[lo:lo + step] = (s0 * t1 - s1 * t0) / det
    return out_m, out_s


def local_linear(x, y, h, x0):
    """Kernel-weighted least-squares line at ``x0`` in the centered coordinate ``x - x0``.

    Returns ``(intercept, slope)``; the intercept is the estimate at ``x0``.
    """
    m, s = local_linear_grid(x, y, h, [x0])
    return float(m[0]), float(s[0])


def kde(x, h, grid):
    """Epanechnikov density estimate ``n^-1 sum K_h(x_i - t)`` at each grid point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    out = np.empty(grid.shape[0])
    step = max(1, 2_000_000 // max(x.shape[0], 1))
    for lo in range(0, grid.shape[0], step):
        g = grid[lo:lo + step]
        out[lo:lo + step] = epanechnikov((x[None, :] - g[:, None]) / h).sum(axis=1) / (x.shape[0] * h)
    return out
