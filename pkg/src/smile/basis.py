"""Knot placement and centered, standardized spline design blocks.

Two families are built here:

* order 1 (piecewise constant) blocks used for structure selection, where
  neighbouring bin indicators are differenced so every column has
  empirical mean zero;
* order ``d >= 2`` B-spline blocks used for refitting, where the first raw
  B-spline is dropped and the rest are mean-centered.

Every column is finally scaled to unit empirical second moment. The
training-sample constants are kept on the block so the same transform can
be applied to new points.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import DegenerateColumn, EmptyBin, InvalidArgs, InvalidN, UnsupportedOrder


@dataclass(frozen=True)
class KnotVector:
    interior: np.ndarray
    boundary: tuple

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=float).reshape(-1)
        a, b = (float(v) for v in self.boundary)
        if not a < b:
            raise DegenerateColumn(f"boundary ({a}, {b}) is empty")
        full = np.concatenate([[a], interior, [b]])
        if np.any(np.diff(full) <= 0):
            raise DegenerateColumn("knots are not strictly increasing (tied quantiles)")
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "boundary", (a, b))

    @property
    def n_interior(self):
        return self.interior.shape[0]

    def edges(self):
        return np.concatenate([[self.boundary[0]], self.interior, [self.boundary[1]]])

    def to_dict(self):
        return {"interior": self.interior.tolist(), "boundary": list(self.boundary)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["interior"]), tuple(d["boundary"]))


def place_knots(x_col, N, spacing="quantile"):
    """Interior knots at the ``j/(N+1)`` sample quantiles (type 7), j = 1..N.

    ``spacing="uniform"`` gives equally spaced knots on ``[min, max]``.
    """
    x = np.asarray(x_col, dtype=float).reshape(-1)
    if int(N) != N or N < 1:
        raise InvalidN(f"number of interior knots must be a positive integer, got {N}")
    N = int(N)
    if np.unique(x).size < N + 2:
        raise DegenerateColumn(f"column has fewer than {N + 2} distinct values")
    a, b = float(x.min()), float(x.max())
    probs = np.arange(1, N + 1) / (N + 1)
    if spacing == "quantile":
        interior = np.quantile(x, probs, method="linear")
    elif spacing == "uniform":
        interior = a + probs * (b - a)
    else:
        raise InvalidArgs(f"unknown knot spacing {spacing!r}")
    return KnotVector(interior, (a, b))


def _bin_index(x, knots):
    # bins [u_J, u_{J+1}); the last bin is closed on the right
    idx = np.searchsorted(knots.interior, x, side="right")
    return np.clip(idx, 0, knots.n_interior)


@dataclass(frozen=True)
class BasisBlock:
    """An n x M standardized spline design for one covariate.

    ``col_norms`` holds each column's empirical L2 norm before scaling.
    For ``order == 1`` the differencing ratios are kept in ``ratios``;
    for ``order >= 2`` the raw-column means are kept in ``col_means``.
    """

    values: np.ndarray
    order: int
    knots: KnotVector
    col_norms: np.ndarray
    col_means: np.ndarray | None = None
    ratios: np.ndarray | None = None

    @property
    def n_cols(self):
        return self.values.shape[1]

    def design(self, x_new):
        """Apply the stored training transform to new points."""
        x_new = np.asarray(x_new, dtype=float).reshape(-1)
        if self.order == 1:
            return _constant_columns(x_new, self.knots, self.ratios) / self.col_norms
        raw = _raw_bspline(x_new, self.knots, self.order)[:, 1:]
        return (raw - self.col_means) / self.col_norms

    def curve(self, coef, x_new, nu=0):
        """Evaluate ``design(x) @ coef`` or its ``nu``-th derivative."""
        coef = np.asarray(coef, dtype=float)
        if nu == 0:
            return self.design(x_new) @ coef
        if self.order == 1:
            return np.zeros(np.size(x_new))
        c = np.concatenate([[0.0], coef / self.col_norms])
        spl = BSpline(_extended_knots(self.knots, self.order), c, self.order - 1, extrapolate=True)
        return spl.derivative(nu)(np.asarray(x_new, dtype=float))

    def to_dict(self):
        d = {"order": self.order, "knots": self.knots.to_dict(), "col_norms": self.col_norms.tolist()}
        if self.col_means is not None:
            d["col_means"] = self.col_means.tolist()
        if self.ratios is not None:
            d["ratios"] = self.ratios.tolist()
        return d

    @classmethod
    def from_dict(cls, d, x=None):
        knots = KnotVector.from_dict(d["knots"])
        blk = cls(np.zeros((0, len(d["col_norms"]))), int(d["order"]), knots,
                  np.asarray(d["col_norms"]),
                  None if "col_means" not in d else np.asarray(d["col_means"]),
                  None if "ratios" not in d else np.asarray(d["ratios"]))
        if x is not None:
            blk = cls(blk.design(x), blk.order, blk.knots, blk.col_norms, blk.col_means, blk.ratios)
        return blk


def _constant_columns(x, knots, ratios):
    idx = _bin_index(x, knots)
    N = knots.n_interior
    out = np.zeros((x.shape[0], N))
    for J in range(1, N + 1):
        out[:, J - 1] = (idx == J) - ratios[J - 1] * (idx == J - 1)
    return out


def constant_basis(x_col, knots):
    """Centered, standardized piecewise-constant basis (N columns).

    Column J is ``I_J - (p_J / p_{J-1}) I_{J-1}`` where ``p_J`` is the
    fraction of observations in bin J, then scaled to unit second moment.
    The ratio of squared indicator norms makes the column mean exactly 0.
    """
    x = np.asarray(x_col, dtype=float).reshape(-1)
    N = knots.n_interior
    counts = np.bincount(_bin_index(x, knots), minlength=N + 1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyBin(int(empty[0]))
    p = counts / x.shape[0]
    ratios = p[1:] / p[:-1]
    raw = _constant_columns(x, knots, ratios)
    norms = np.sqrt(np.mean(raw**2, axis=0))
    return BasisBlock(raw / norms, 1, knots, norms, None, ratios)


def _extended_knots(knots, d):
    a, b = knots.boundary
    return np.concatenate([np.full(d, a), knots.interior, np.full(d, b)])


def _raw_bspline(x, knots, d):
    """Order-d B-spline values (N + d columns); points outside [a, b] are clamped."""
    a, b = knots.boundary
    xc = np.clip(x, a, b)
    t = _extended_knots(knots, d)
    return BSpline.design_matrix(xc, t, d - 1, extrapolate=False).toarray()


def bspline_basis(x_col, knots, d):
    """Centered, standardized order-``d`` B-spline block with ``N + d - 1`` columns."""
    if d not in (2, 3, 4):
        raise UnsupportedOrder(f"spline order {d} not supported (use 2, 3 or 4)")
    x = np.asarray(x_col, dtype=float).reshape(-1)
    N = knots.n_interior
    counts = np.bincount(_bin_index(x, knots), minlength=N + 1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyBin(int(empty[0]))
    raw = _raw_bspline(x, knots, d)[:, 1:]
    means = raw.mean(axis=0)
    centered = raw - means
    norms = np.sqrt(np.mean(centered**2, axis=0))
    if np.any(norms == 0):
        raise DegenerateColumn("a B-spline column is constant on the sample")
    return BasisBlock(centered / norms, d, knots, norms, means, None)


def rule_of_thumb_knots(n, d, s):
    """``min(floor(n**e * ln n), floor(n / (4 s))) + 1`` with ``e = max(1/(2d), 4/(10d-5))``."""
    if n < 8 or d < 2 or s < 1:
        raise InvalidArgs(f"rule_of_thumb_knots needs n >= 8, d >= 2, s >= 1 (got {n}, {d}, {s})")
    e = max(1.0 / (2 * d), 4.0 / (10 * d - 5))
    return min(math.floor(n**e * math.log(n)), n // (4 * s)) + 1
