"""Structure selection: tuned group LASSO initializer, iterated adaptive refits, classification.

All penalized fits run on a standardized selection design:

* each Z column centered and scaled to unit second moment (the centering
  takes the place of an intercept, the response being centered already);
* each (centered) X column scaled to unit second moment;
* each piecewise-constant spline block made orthogonal to its own
  (standardized) covariate, so that the spline group can only carry the
  nonlinear contrast, then orthonormalized so that ``B' B = n I``.

Coefficients reported to callers are on the original column scales. Spline
coefficients refer to the :func:`smile.basis.constant_basis` block after the
linear projection, i.e. ``g(x) = (B - x_std c') gamma`` with ``c`` stored in
``SelectionDesign.lin_proj``.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .basis import constant_basis, place_knots
from .data import center
from .errors import AllGroupsExcluded, InvalidArgs
from .solver import CoefTriple, GroupedDesign, GroupWeights, adaptive_weights, fit_path, lambda_path

VARIANTS = ("SMILE", "SAPLM", "SLM", "ORACLE")
# block membership per variant: Z linear, X linear, X spline
_BLOCKS = {"SMILE": (0, 1, 2), "SAPLM": (0, 2), "SLM": (0, 1)}


def bic(rss, df, n, p_total):
    """``ln(rss) + df ln(p_total) ln(n) / (2n)``."""
    if not rss > 0 or n < 2 or p_total < 1:
        raise InvalidArgs("bic needs rss > 0, n >= 2, p_total >= 1")
    return math.log(rss) + df * math.log(p_total) * math.log(n) / (2 * n)


def ebic(rss, df, n, p_total):
    """``ln(rss) + df ln(n) / n + df ln(p_total) / n``."""
    if not rss > 0 or n < 2 or p_total < 1:
        raise InvalidArgs("ebic needs rss > 0, n >= 2, p_total >= 1")
    return math.log(rss) + df * math.log(n) / n + df * math.log(p_total) / n


CRITERIA = {"BIC": bic, "EBIC": ebic}


@dataclass(frozen=True)
class SelectionConfig:
    n_knots_select: int = 4
    delta0: float = 1e-6
    outer_iters: int = 3
    lambda_grid_size: int = 50
    lambda_min_ratio: float = 1e-4
    variant: str = "SMILE"
    refit_others: str = "fixed"
    knot_spacing: str = "quantile"
    tol: float = 1e-7
    max_sweeps: int = 10000
    df_cap_ratio: float = 0.5
    refit_order: int = 4
    refit_knots: int | str = 4
    orthogonalize_linear: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgs(f"unknown variant {self.variant!r}")
        if self.refit_others not in ("fixed", "free"):
            raise InvalidArgs("refit_others must be 'fixed' or 'free'")
        if self.outer_iters < 0 or self.lambda_grid_size < 2 or not self.delta0 > 0:
            raise InvalidArgs("invalid selection config")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidArgs(f"unknown selection config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ModelStructure:
    """0-based index sets; the three X sets are disjoint."""

    s_z: tuple = ()
    s_x_pl: tuple = ()
    s_x_ln: tuple = ()
    s_x_pn: tuple = ()

    def __post_init__(self):
        for name in ("s_z", "s_x_pl", "s_x_ln", "s_x_pn"):
            object.__setattr__(self, name, tuple(sorted(int(i) for i in getattr(self, name))))
        a, b, c = set(self.s_x_pl), set(self.s_x_ln), set(self.s_x_pn)
        if a & b or a & c or b & c:
            raise InvalidArgs("X index sets overlap")

    @property
    def s_x_n(self):
        return tuple(sorted(self.s_x_ln + self.s_x_pn))

    @property
    def s_x(self):
        return tuple(sorted(self.s_x_pl + self.s_x_ln + self.s_x_pn))

    @property
    def empty(self):
        return not (self.s_z or self.s_x)

    def to_dict(self, z_names=None, x_names=None):
        out = {k: list(getattr(self, k)) for k in ("s_z", "s_x_pl", "s_x_ln", "s_x_pn")}
        if z_names is not None:
            out["z_names"] = [z_names[i] for i in self.s_z]
        if x_names is not None:
            for k in ("s_x_pl", "s_x_ln", "s_x_pn"):
                out[k + "_names"] = [x_names[i] for i in getattr(self, k)]
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("s_z", ()), d.get("s_x_pl", ()), d.get("s_x_ln", ()), d.get("s_x_pn", ()))


@dataclass
class TuningReport:
    criterion: str
    block: str
    lambdas: np.ndarray
    rss: np.ndarray
    df: np.ndarray
    scores: np.ndarray
    chosen: int
    adaptive: bool = False

    @property
    def chosen_lambda(self):
        return float(self.lambdas[self.chosen])

    def rows(self):
        return list(zip(self.lambdas.tolist(), self.rss.tolist(), self.df.tolist(), self.scores.tolist()))


def classify(theta):
    """Index sets from exact zeros of a :class:`CoefTriple`."""
    gn = theta.gamma_norms() if theta.gamma else np.zeros(theta.beta.shape[0])
    lin = theta.beta != 0
    nl = gn > 0
    return ModelStructure(
        np.flatnonzero(theta.alpha != 0),
        np.flatnonzero(lin & ~nl),
        np.flatnonzero(lin & nl),
        np.flatnonzero(~lin & nl),
    )


class SelectionDesign:
    """Standardized selection blocks built once per (centered) dataset."""

    def __init__(self, ds, cfg):
        if not ds.centered:
            ds = center(ds)
        n = ds.n
        self.n, self.p1, self.p2, self.N = n, ds.p1, ds.p2, cfg.n_knots_select
        self.y = ds.y.copy()

        z_mean = ds.z.mean(axis=0) if ds.p1 else np.zeros(0)
        zc = ds.z - z_mean
        z_sd = np.sqrt(np.mean(zc**2, axis=0)) if ds.p1 else np.zeros(0)
        self.z_ok = z_sd > 1e-12 * (1 + np.abs(z_mean))
        self.z_scale = np.where(self.z_ok, z_sd, 1.0)
        self.zs = np.where(self.z_ok, zc / self.z_scale, 0.0)

        x_sd = np.sqrt(np.mean(ds.x**2, axis=0)) if ds.p2 else np.zeros(0)
        self.x_ok = x_sd > 1e-12
        self.x_scale = np.where(self.x_ok, x_sd, 1.0)
        self.xs = np.where(self.x_ok, ds.x / self.x_scale, 0.0)

        # spline blocks: B = Q R, B_std = sqrt(n) Q, B gamma = B_std (R / sqrt(n)) gamma.
        # With orthogonalize_linear the covariate itself is first projected out
        # of B, so the spline group carries only the nonlinear contrast.
        raw_x = ds.raw_x()
        self.orthogonal = cfg.orthogonalize_linear
        self.bases, self.T, self.bs, self.lin_proj = [], [], [], []
        for l in range(ds.p2):
            knots = place_knots(raw_x[:, l], self.N, cfg.knot_spacing)
            blk = constant_basis(raw_x[:, l], knots)
            B = blk.values
            c = np.zeros(self.N)
            if self.orthogonal and self.x_ok[l]:
                c = self.xs[:, l] @ B / n
                B = B - np.outer(self.xs[:, l], c)
            self.lin_proj.append(c)
            Q, R = np.linalg.qr(B)
            sgn = np.where(np.diag(R) < 0, -1.0, 1.0)
            Q, R = Q * sgn, R * sgn[:, None]
            self.bases.append(blk)
            self.T.append(R / math.sqrt(n))
            self.bs.append(Q * math.sqrt(n))

        self._designs = {}

    def p_total(self):
        return self.p1 + self.p2 + self.p2 * self.N

    def design(self, classes):
        """Cached :class:`GroupedDesign` holding the listed classes (0 Z, 1 X linear, 2 spline)."""
        key = tuple(classes)
        if key not in self._designs:
            blocks = []
            if 0 in key:
                blocks += [(f"z{k}", "Zlinear", self.zs[:, [k]], k) for k in range(self.p1)]
            if 1 in key:
                blocks += [(f"xl{l}", "Xlinear", self.xs[:, [l]], l) for l in range(self.p2)]
            if 2 in key:
                blocks += [(f"xs{l}", "Xspline", self.bs[l], l) for l in range(self.p2)]
            self._designs[key] = GroupedDesign(blocks, self.y, self.p1, self.p2, self.N)
        return self._designs[key]

    def base_weights(self):
        """Unit weights, with degenerate columns excluded."""
        inf_or_one = lambda ok: np.where(ok, 1.0, np.inf)
        return GroupWeights(inf_or_one(self.z_ok), inf_or_one(self.x_ok), inf_or_one(self.x_ok))

    def contributions(self, theta):
        fz = self.zs @ theta.alpha if self.p1 else np.zeros(self.n)
        fl = self.xs @ theta.beta if self.p2 else np.zeros(self.n)
        fs = np.zeros(self.n)
        for l, g in enumerate(theta.gamma):
            if np.any(g != 0):
                fs += self.bs[l] @ g
        return fz, fl, fs

    def to_original(self, theta):
        """Standardized coefficients to original column scales (see module notes for splines)."""
        gamma = [solve_triangular(self.T[l], g) if np.any(g != 0) else np.zeros(self.N)
                 for l, g in enumerate(theta.gamma)]
        return CoefTriple(theta.alpha / self.z_scale, theta.beta / self.x_scale, gamma)


def _df_of(theta, classes, N):
    df = 0
    if 0 in classes:
        df += int(np.count_nonzero(theta.alpha))
    if 1 in classes:
        df += int(np.count_nonzero(theta.beta))
    if 2 in classes:
        df += N * int(np.count_nonzero(theta.gamma_norms()))
    return df


def _merge_weights(base, update, classes):
    out = [base.alpha, base.beta, base.gamma]
    src = [update.alpha, update.beta, update.gamma]
    for c in classes:
        # a column excluded up front stays excluded
        out[c] = np.where(np.isinf(out[c]), np.inf, src[c])
    return GroupWeights(*out)


def _tuned_path(sd, design, weights, criterion, df_offset, cfg, label, adaptive, theta_init=None):
    """Fit a lambda path and return (chosen flat theta, report)."""
    try:
        lams = lambda_path(design, weights, cfg.lambda_grid_size, cfg.lambda_min_ratio)
    except AllGroupsExcluded:
        return np.zeros(design.X.shape[1]), None
    pts = fit_path(design, lams, weights, tol=cfg.tol, max_sweeps=cfg.max_sweeps,
                   df_cap=cfg.df_cap_ratio * sd.n)
    crit = CRITERIA[criterion]
    tiny = 1e-300
    scores = np.array([crit(max(p.rss, tiny), p.df + df_offset, sd.n, sd.p_total()) for p in pts])
    # the point that overshot the df cap is not a candidate
    if len(pts) > 1 and pts[-1].df > cfg.df_cap_ratio * sd.n:
        scores[-1] = np.inf
    k = int(np.argmin(scores))
    report = TuningReport(
        criterion, label, np.array([p.lam for p in pts]), np.array([p.rss for p in pts]),
        np.array([p.df + df_offset for p in pts]), scores, k, adaptive,
    )
    return pts[k].theta, report


_BLOCK_NAMES = {0: "alpha", 1: "beta", 2: "gamma"}
_BLOCK_CRIT = {0: "BIC", 1: "BIC", 2: "EBIC"}


def _zero_block(theta, c, N):
    out = theta.copy()
    if c == 0:
        out.alpha[:] = 0
    elif c == 1:
        out.beta[:] = 0
    else:
        out.gamma = [np.zeros(N) for _ in out.gamma]
    return out


def _block_step(sd, theta, c, classes, base_w, cfg, reports):
    """Steps (group LASSO -> adaptive weights -> adaptive group LASSO) for one block."""
    N = sd.N
    others = [o for o in classes if o != c]
    fz, fl, fs = sd.contributions(theta)
    contrib = {0: fz, 1: fl, 2: fs}
    df_others = sum(_df_of(theta, (o,), N) for o in others)

    if cfg.refit_others == "fixed":
        r = sd.y - sum(contrib[o] for o in others)
        design = sd.design((c,)).with_response(r)
        wmask = lambda w: w
        offset = df_others
    else:
        design = sd.design(tuple(classes)).with_response(sd.y)
        offset = 0
        act = [theta.alpha != 0, theta.beta != 0, theta.gamma_norms() > 0]

        def wmask(w):
            parts = [w.alpha, w.beta, w.gamma]
            for o in others:
                parts[o] = np.where(act[o], 0.0, np.inf)
            return GroupWeights(*parts)

    name = _BLOCK_NAMES[c]
    crit = _BLOCK_CRIT[c]
    w0 = wmask(base_w)
    flat, rep = _tuned_path(sd, design, w0, crit, offset, cfg, name, False)
    if rep is not None:
        reports.append(rep)
    tilde = design.from_flat(flat, base=_zero_block(theta, c, N) if cfg.refit_others == "fixed" else None)

    aw = _merge_weights(base_w, adaptive_weights(tilde), (c,))
    flat, rep = _tuned_path(sd, design, wmask(aw), crit, offset, cfg, name, True)
    if rep is not None:
        reports.append(rep)
    if cfg.refit_others == "fixed":
        return design.from_flat(flat, base=_zero_block(theta, c, N))
    return design.from_flat(flat)


def select_standardized(sd, cfg):
    """Run the selection iterations on a prepared :class:`SelectionDesign`.

    Returns standardized coefficients and the list of tuning reports.
    """
    classes = _BLOCKS[cfg.variant]
    if sd.p1 == 0:
        classes = tuple(c for c in classes if c != 0)
    if sd.p2 == 0:
        classes = tuple(c for c in classes if c == 0)
    reports = []
    theta = CoefTriple.zeros(sd.p1, sd.p2, sd.N)
    if not classes:
        return theta, reports
    base_w = sd.base_weights()

    # step 0: group LASSO, one lambda for every block, chosen by BIC
    design = sd.design(classes)
    flat, rep = _tuned_path(sd, design, base_w, "BIC", 0, cfg, "initial", False)
    if rep is not None:
        reports.append(rep)
    theta = design.from_flat(flat)

    for _ in range(cfg.outer_iters):
        prev = theta.flat()
        for c in classes:
            theta = _block_step(sd, theta, c, classes, base_w, cfg, reports)
        if float(np.sum((theta.flat() - prev) ** 2)) < cfg.delta0:
            break
    return theta, reports


def smile_select(ds, cfg=None):
    """Select the model structure.

    Parameters
    ----------
    ds : Dataset
        Centered or raw; raw data are centered first.
    cfg : SelectionConfig, optional

    Returns
    -------
    coef : CoefTriple
        Final penalized estimates on the original column scales.
    structure : ModelStructure
    reports : list of TuningReport
    """
    cfg = cfg or SelectionConfig()
    if cfg.variant == "ORACLE":
        raise InvalidArgs("the ORACLE variant has no selection step; use fit_variant")
    sd = SelectionDesign(ds, cfg)
    theta, reports = select_standardized(sd, cfg)
    return sd.to_original(theta), classify(theta), reports


@dataclass
class FittedModel:
    """Selected structure plus the unpenalized refit used for prediction and bands."""

    variant: str
    structure: ModelStructure
    refit: object
    coef: CoefTriple | None = None
    reports: list = field(default_factory=list)

    def predict(self, z, x_raw):
        return self.refit.predict(z, x_raw)


def fit_variant(ds, cfg=None, variant=None, truth=None):
    """Selection (unless ORACLE) followed by the order-d refit.

    ``truth`` is the true :class:`ModelStructure`, required for ORACLE.
    """
    from .inference import refit

    cfg = cfg or SelectionConfig()
    variant = variant or cfg.variant
    if variant not in VARIANTS:
        raise InvalidArgs(f"unknown variant {variant!r}")
    cds = ds if ds.centered else center(ds)
    if variant == "ORACLE":
        if truth is None:
            raise InvalidArgs("ORACLE needs the true structure")
        structure = truth if isinstance(truth, ModelStructure) else truth.structure
        coef, reports = None, []
    else:
        coef, structure, reports = smile_select(cds, replace(cfg, variant=variant))
    fit = refit(cds, structure, cfg.refit_order, cfg.refit_knots, cfg.knot_spacing)
    return FittedModel(variant, structure, fit, coef, reports)
