"""Grouped penalized least squares by cyclic group coordinate descent.

The objective is

    L(theta) = 0.5 * ||y - D theta||^2 + sum_m lambda_{class(m)} w_m ||theta_m||

with groups of three classes: scalar ``Zlinear`` and ``Xlinear`` columns and
``Xspline`` blocks. The 1/2 on the residual sum of squares makes the
stationarity conditions read ``D_m' r = lambda w theta_m / ||theta_m||`` for
active groups and ``||D_m' r|| <= lambda w`` for zero groups.

Groups are minimized exactly in the original coordinates: each group Gram
matrix is eigendecomposed once, after which the group subproblem reduces to
a one-dimensional secular equation. The sweep itself runs in the compiled
kernel when it is importable and in numpy otherwise; set
``SMILE_PURE_PYTHON=1`` to force the fallback.
"""

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AllGroupsExcluded, DidNotConverge, InvalidArgs, NonFiniteObjective

if os.environ.get("SMILE_PURE_PYTHON"):
    from ._gcd_py import sweep as _sweep
    BACKEND = "python"
else:
    try:
        from ._gcd import sweep as _sweep
        BACKEND = "cython"
    except ImportError:
        from ._gcd_py import sweep as _sweep
        BACKEND = "python"

CLASSES = ("Zlinear", "Xlinear", "Xspline")


@dataclass
class CoefTriple:
    """``alpha`` (p1), ``beta`` (p2) and one spline coefficient vector per X column."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: list

    @classmethod
    def zeros(cls, p1, p2, n_basis):
        return cls(np.zeros(p1), np.zeros(p2), [np.zeros(n_basis) for _ in range(p2)])

    def copy(self):
        return CoefTriple(self.alpha.copy(), self.beta.copy(), [g.copy() for g in self.gamma])

    def gamma_norms(self):
        return np.array([np.linalg.norm(g) for g in self.gamma])

    def flat(self):
        return np.concatenate([self.alpha, self.beta, *self.gamma]) if self.gamma else \
            np.concatenate([self.alpha, self.beta])


@dataclass(frozen=True)
class GroupWeights:
    """Per-group penalty multipliers; ``inf`` excludes a group."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class PenaltySpec:
    lambda_z: float = 0.0
    lambda_xl: float = 0.0
    lambda_xs: float = 0.0
    weights: GroupWeights | None = None

    def __post_init__(self):
        for v in (self.lambda_z, self.lambda_xl, self.lambda_xs):
            if not v >= 0:
                raise InvalidArgs("penalty levels must be nonnegative")

    @classmethod
    def common(cls, lam, weights=None):
        return cls(lam, lam, lam, weights)


class GroupedDesign:
    """Column-stacked design ``D`` with its group structure and response.

    Parameters
    ----------
    blocks : list of (label, cls, matrix, covariate)
        ``cls`` is one of ``Zlinear``, ``Xlinear``, ``Xspline``;
        ``covariate`` is the 0-based Z or X column the group belongs to.
    y : ndarray, shape (n,)
    p1, p2 : int
        Sizes of the Z and X universes (groups need not cover them).
    n_basis : int
        Columns per spline group.
    """

    def __init__(self, blocks, y, p1, p2, n_basis):
        y = np.asarray(y, dtype=float).reshape(-1)
        n = y.shape[0]
        mats, self.labels, self.classes, self.covariates, sizes = [], [], [], [], []
        for label, cls, mat, cov in blocks:
            if cls not in CLASSES:
                raise InvalidArgs(f"unknown group class {cls!r}")
            mat = np.asarray(mat, dtype=float).reshape(n, -1)
            if cls != "Xspline" and mat.shape[1] != 1:
                raise InvalidArgs(f"linear group {label!r} must have one column")
            if cls == "Xspline" and mat.shape[1] != n_basis:
                raise InvalidArgs(f"spline group {label!r} must have {n_basis} columns")
            mats.append(mat)
            self.labels.append(label)
            self.classes.append(cls)
            self.covariates.append(int(cov))
            sizes.append(mat.shape[1])
        self.X = np.asfortranarray(np.hstack(mats) if mats else np.zeros((n, 0)))
        self.y = y
        self.p1, self.p2, self.n_basis = int(p1), int(p2), int(n_basis)
        self.sizes = np.asarray(sizes, dtype=np.intp)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.intp)
        self.class_codes = np.array([CLASSES.index(c) for c in self.classes], dtype=int)
        self._eigen()

    @classmethod
    def from_arrays(cls, y, z=None, x_linear=None, splines=None, n_basis=None):
        """Convenience constructor: every Z / X column a scalar group, every spline matrix a group."""
        y = np.asarray(y, dtype=float)
        n = y.shape[0]
        z = np.zeros((n, 0)) if z is None else np.asarray(z, dtype=float).reshape(n, -1)
        xl = np.zeros((n, 0)) if x_linear is None else np.asarray(x_linear, dtype=float).reshape(n, -1)
        splines = [] if splines is None else list(splines)
        if n_basis is None:
            n_basis = splines[0].shape[1] if splines else 1
        p2 = max(xl.shape[1], len(splines))
        blocks = [(f"z{k}", "Zlinear", z[:, [k]], k) for k in range(z.shape[1])]
        blocks += [(f"xl{l}", "Xlinear", xl[:, [l]], l) for l in range(xl.shape[1])]
        blocks += [(f"xs{l}", "Xspline", B, l) for l, B in enumerate(splines)]
        return cls(blocks, y, z.shape[1], p2, n_basis)

    def with_response(self, y):
        """Shallow copy sharing all caches but with a new response."""
        out = object.__new__(GroupedDesign)
        out.__dict__.update(self.__dict__)
        out.y = np.asarray(y, dtype=float).reshape(-1)
        return out

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def n_groups(self):
        return self.sizes.shape[0]

    def group_slice(self, m):
        return slice(self.starts[m], self.starts[m] + self.sizes[m])

    def _eigen(self):
        # scalar groups: eigenvalue = squared column norm, eigenvector 1
        self.evals = np.einsum("ij,ij->j", self.X, self.X)
        self.voff = np.zeros(self.n_groups, dtype=np.intp)
        vecs, off = [], 0
        for m in range(self.n_groups):
            d = self.sizes[m]
            self.voff[m] = off
            if d == 1:
                vecs.append(np.ones(1))
            else:
                B = self.X[:, self.group_slice(m)]
                lam, V = np.linalg.eigh(B.T @ B)
                self.evals[self.group_slice(m)] = np.maximum(lam, 0.0)
                vecs.append(np.ascontiguousarray(V).ravel())
            off += d * d
        self.evecs = np.concatenate(vecs) if vecs else np.zeros(0)
        self._work = np.zeros(4 * int(self.sizes.max(initial=1)))

    @cached_property
    def qr_factors(self):
        """Thin QR factors ``(Q_m, R_m)`` of every group block."""
        return [np.linalg.qr(self.X[:, self.group_slice(m)]) for m in range(self.n_groups)]

    def group_weights(self, weights):
        """Expand :class:`GroupWeights` (or ``None`` for unit weights) to one value per group."""
        if weights is None:
            return np.ones(self.n_groups)
        src = (weights.alpha, weights.beta, weights.gamma)
        return np.array([float(src[c][cov]) for c, cov in zip(self.class_codes, self.covariates)])

    def thresholds(self, pen):
        lam = np.array([pen.lambda_z, pen.lambda_xl, pen.lambda_xs])[self.class_codes]
        w = self.group_weights(pen.weights)
        # an infinite weight pins the group at zero whatever lambda is
        return np.where(np.isinf(w), np.inf, lam * np.where(np.isinf(w), 0.0, w))

    def to_flat(self, coef):
        theta = np.zeros(self.X.shape[1])
        if coef is None:
            return theta
        for m, (c, cov) in enumerate(zip(self.class_codes, self.covariates)):
            sl = self.group_slice(m)
            if c == 0:
                theta[sl] = coef.alpha[cov]
            elif c == 1:
                theta[sl] = coef.beta[cov]
            else:
                theta[sl] = coef.gamma[cov]
        return theta

    def from_flat(self, theta, base=None):
        out = CoefTriple.zeros(self.p1, self.p2, self.n_basis) if base is None else base.copy()
        for m, (c, cov) in enumerate(zip(self.class_codes, self.covariates)):
            sl = self.group_slice(m)
            if c == 0:
                out.alpha[cov] = theta[sl][0]
            elif c == 1:
                out.beta[cov] = theta[sl][0]
            else:
                out.gamma[cov] = theta[sl].copy()
        return out

    def group_norms(self, v):
        """Euclidean norm of each group's slice of a column-indexed vector."""
        sq = np.add.reduceat(v * v, self.starts) if self.n_groups else np.zeros(0)
        return np.sqrt(sq)


def group_soft_threshold(z, t):
    """``(1 - t/||z||)_+ z``."""
    if t < 0:
        raise InvalidArgs("threshold must be nonnegative")
    z = np.asarray(z, dtype=float)
    nz = np.linalg.norm(z)
    if nz <= t:
        return np.zeros_like(z)
    return (1.0 - t / nz) * z


def objective(design, pen, theta):
    if isinstance(theta, CoefTriple):
        theta = design.to_flat(theta)
    r = design.y - design.X @ theta
    t = design.thresholds(pen)
    norms = design.group_norms(theta)
    pen_val = float(np.sum(np.where(norms > 0, t * norms, 0.0)))
    return 0.5 * float(r @ r) + pen_val


def kkt_residual(design, pen, theta):
    """Largest violation of the group-LASSO optimality conditions.

    Active groups: ``||D_m' r - t_m theta_m / ||theta_m|| ||``; zero groups:
    ``(||D_m' r|| - t_m)_+``; excluded (infinite-weight) groups must be zero
    and contribute nothing otherwise.
    """
    if isinstance(theta, CoefTriple):
        theta = design.to_flat(theta)
    r = design.y - design.X @ theta
    grad = design.X.T @ r
    t = design.thresholds(pen)
    worst = 0.0
    for m in range(design.n_groups):
        sl = design.group_slice(m)
        th = theta[sl]
        nt = np.linalg.norm(th)
        if np.isinf(t[m]):
            v = math.inf if nt > 0 else 0.0
        elif nt > 0:
            v = np.linalg.norm(grad[sl] - t[m] * th / nt)
        else:
            v = max(np.linalg.norm(grad[sl]) - t[m], 0.0)
        worst = max(worst, v)
    return float(worst)


def adaptive_weights(initial):
    """Reciprocal magnitudes of an initial fit; zeros map to ``inf``."""
    def recip(v):
        v = np.abs(np.asarray(v, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), np.inf)
    return GroupWeights(recip(initial.alpha), recip(initial.beta), recip(initial.gamma_norms()))


def _solve(design, thresh, theta, r, tol, max_sweeps, screen=None, certify_tol=None):
    """Core descent loop; ``theta`` and ``r`` are updated in place.

    ``screen`` restricts the initial working set (strong rule); groups left
    out are re-checked against their KKT condition before returning. With
    ``certify_tol`` the loop also continues until the KKT residual of the
    returned point is below it. Returns the number of sweeps used.
    """
    included = np.flatnonzero(~np.isinf(thresh))
    working = included if screen is None else np.intersect1d(screen, included)
    sweeps = 0
    while True:
        active_tol = tol
        while True:
            chg = _sweep(design.X, r, theta, design.starts, design.sizes, design.voff,
                         design.evals, design.evecs, thresh, working.astype(np.intp), design._work)
            sweeps += 1
            if not math.isfinite(chg):
                raise NonFiniteObjective("non-finite coefficient update")
            if chg < active_tol:
                break
            # cycle only the nonzero groups until they settle, then rescan the working set
            act = working[design.group_norms(theta)[working] > 0]
            while act.size and sweeps < max_sweeps:
                c2 = _sweep(design.X, r, theta, design.starts, design.sizes, design.voff,
                            design.evals, design.evecs, thresh, act.astype(np.intp), design._work)
                sweeps += 1
                if c2 < active_tol:
                    break
            if sweeps >= max_sweeps:
                raise DidNotConverge(f"no convergence after {sweeps} sweeps", theta.copy())
        grad_norms = design.group_norms(design.X.T @ r)
        outside = np.setdiff1d(included, working, assume_unique=True)
        viol = outside[grad_norms[outside] > thresh[outside] * (1 + 1e-12)]
        if viol.size:
            working = np.union1d(working, viol)
            continue
        if certify_tol is not None:
            if kkt_residual_flat(design, thresh, theta, r) > certify_tol:
                tol = tol / 10.0
                if tol < 1e-15 or sweeps >= max_sweeps:
                    raise DidNotConverge("KKT certification failed", theta.copy())
                continue
        return sweeps


def kkt_residual_flat(design, thresh, theta, r):
    grad = design.X.T @ r
    worst = 0.0
    for m in range(design.n_groups):
        if np.isinf(thresh[m]):
            continue
        sl = design.group_slice(m)
        th = theta[sl]
        nt = np.linalg.norm(th)
        if nt > 0:
            v = np.linalg.norm(grad[sl] - thresh[m] * th / nt)
        else:
            v = np.linalg.norm(grad[sl]) - thresh[m]
        worst = max(worst, v)
    return worst


def fit_penalized(design, pen, init=None, tol=1e-7, max_sweeps=10000):
    """Minimize the penalized objective; the result satisfies KKT to ``10 * tol``.

    Parameters
    ----------
    design : GroupedDesign
    pen : PenaltySpec
    init : CoefTriple, optional
        Warm start (excluded groups are reset to zero).
    tol : float
        Bound on the largest coefficient change in the last sweep.
    max_sweeps : int

    Returns
    -------
    CoefTriple
    """
    if not tol > 0:
        raise InvalidArgs("tol must be positive")
    thresh = design.thresholds(pen)
    theta = design.to_flat(init)
    for m in np.flatnonzero(np.isinf(thresh)):
        theta[design.group_slice(m)] = 0.0
    r = design.y - design.X @ theta
    if not np.all(np.isfinite(r)):
        raise NonFiniteObjective("non-finite residual at the starting point")
    _solve(design, thresh, theta, r, tol, max_sweeps, certify_tol=10 * tol)
    return design.from_flat(theta)


def lambda_max(design, weights=None):
    """Smallest common lambda at which every penalized group is zero.

    Groups with weight 0 are unpenalized; they are fitted by least squares
    first and ``lambda_max`` is computed on the resulting residual.
    """
    w = design.group_weights(weights)
    inc = np.flatnonzero(~np.isinf(w))
    if inc.size == 0:
        raise AllGroupsExcluded("every group has infinite weight")
    r = design.y
    free = inc[w[inc] == 0]
    if free.size:
        cols = np.concatenate([np.arange(design.starts[m], design.starts[m] + design.sizes[m]) for m in free])
        coef, *_ = np.linalg.lstsq(design.X[:, cols], r, rcond=None)
        r = r - design.X[:, cols] @ coef
    pen = inc[w[inc] > 0]
    if pen.size == 0:
        return 0.0
    gn = design.group_norms(design.X.T @ r)
    return float(np.max(gn[pen] / w[pen]))


def lambda_path(design, weights=None, n_points=50, min_ratio=1e-4):
    """Log-spaced decreasing grid from ``lambda_max`` to ``min_ratio * lambda_max``."""
    if n_points < 2:
        raise InvalidArgs("n_points must be at least 2")
    lmax = lambda_max(design, weights)
    if lmax == 0.0:
        return np.zeros(n_points)
    return np.exp(np.linspace(np.log(lmax), np.log(lmax * min_ratio), n_points))


@dataclass
class PathPoint:
    lam: float
    theta: np.ndarray
    rss: float
    df: int


def fit_path(design, lambdas, weights=None, scale=(1.0, 1.0, 1.0), theta0=None,
             tol=1e-7, max_sweeps=10000, df_cap=None, callback=None):
    """Warm-started fits along a decreasing lambda grid (sequential strong rule).

    ``scale`` multiplies the common lambda per class. The path stops early
    once the number of nonzero scalar coefficients exceeds ``df_cap``.
    ``callback(point)`` may return True to stop the path.
    """
    w = design.group_weights(weights)
    excl = np.isinf(w)
    wz = np.where(excl, 0.0, w)
    cls_scale = np.asarray(scale, dtype=float)[design.class_codes]
    theta = np.zeros(design.X.shape[1]) if theta0 is None else np.array(theta0, dtype=float)
    for m in np.flatnonzero(excl):
        theta[design.group_slice(m)] = 0.0
    r = design.y - design.X @ theta
    out = []
    prev = None
    grad_norms = design.group_norms(design.X.T @ r)
    for lam in lambdas:
        thresh = np.where(excl, np.inf, lam * cls_scale * wz)
        if prev is None:
            screen_cut = thresh
        else:
            screen_cut = (2 * lam - prev) * cls_scale * wz
        nz = design.group_norms(theta) > 0
        screen = np.flatnonzero(nz | (grad_norms >= screen_cut) | (wz == 0))
        _solve(design, thresh, theta, r, tol, max_sweeps, screen=screen)
        grad_norms = design.group_norms(design.X.T @ r)
        norms = design.group_norms(theta)
        df = int(np.sum(design.sizes[norms > 0]))
        pt = PathPoint(float(lam), theta.copy(), float(r @ r), df)
        out.append(pt)
        prev = lam
        if df_cap is not None and df > df_cap:
            break
        if callback is not None and callback(pt):
            break
    return out
