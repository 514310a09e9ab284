"""Data-generating processes, metrics and replicated experiments."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .data import Dataset, center, make_rng
from .errors import InvalidArgs, SmileError
from .inference import pseudo_responses, sbll_curve
from .kernel import local_linear_grid, rot_bandwidth
from .selection import ModelStructure, SelectionConfig, fit_variant

SCENARIOS = ("APLM", "AM", "LM")
SELECTION_COLUMNS = ("corrZ", "corrZ0", "corrL", "corrN", "corrLN", "corrX0")
ERROR_COLUMNS = ("Zto0", "LtoN", "NtoL", "Xto0")
METRIC_COLUMNS = SELECTION_COLUMNS + ERROR_COLUMNS


# -- true components (module level so replicates pickle) ----------------------

def phi_linear9(x):
    return 9.0 * x


def phi_trig(x):
    # E{-1.5 cos^2(pi X) + 3 sin^2(pi X)} = 0.75 for X ~ U[-1/2, 1/2]
    return -1.5 * np.cos(np.pi * x) ** 2 + 3.0 * np.sin(np.pi * x) ** 2 - 0.75


def phi_quad(x):
    # E(6X + 18X^2) = 18/12
    return 6.0 * x + 18.0 * x**2 - 1.5


def phi_am1(x):
    s = np.sin(2 * np.pi * x)
    # E{8 sin(2 pi X)/(2 - sin(2 pi X))} = 8(-1 + 2/sqrt(3))
    return 8.0 * s / (2.0 - s) - 8.0 * (-1.0 + 2.0 / math.sqrt(3.0))


def phi_am2(x):
    return -3.0 * np.cos(np.pi * x) ** 2 + 6.0 * np.sin(np.pi * x) ** 2 - 1.5


class _Linear:
    def __init__(self, b):
        self.b = float(b)

    def __call__(self, x):
        return self.b * x


@dataclass(frozen=True)
class DgpSpec:
    n: int = 300
    p1: int = 200
    p2: int = 200
    sigma: float = 0.5
    scenario: str = "APLM"
    seed: int = 0

    def __post_init__(self):
        if self.n < 50 or not self.sigma >= 0 or self.scenario not in SCENARIOS:
            raise InvalidArgs(f"invalid DGP spec {self}")
        if self.scenario == "APLM" and (self.p1 < 3 or self.p2 < 3):
            raise InvalidArgs("APLM scenario needs p1, p2 >= 3")
        if self.scenario != "APLM" and self.p2 < 3:
            raise InvalidArgs("AM/LM scenarios need p2 >= 3")


@dataclass
class Truth:
    structure: ModelStructure
    alpha: np.ndarray
    beta: np.ndarray
    funcs: list
    sigma: float

    def phi(self, l, x):
        f = self.funcs[l]
        return np.zeros_like(x) if f is None else f(x)


def truth_for(spec):
    p1 = spec.p1 if spec.scenario == "APLM" else 0
    alpha = np.zeros(p1)
    beta = np.zeros(spec.p2)
    funcs = [None] * spec.p2
    if spec.scenario == "APLM":
        alpha[:3] = (3.0, 4.0, -2.0)
        funcs[:3] = [phi_linear9, phi_trig, phi_quad]
        beta[0], beta[2] = 9.0, 6.0
        st = ModelStructure((0, 1, 2), (0,), (2,), (1,))
    elif spec.scenario == "AM":
        funcs[:3] = [phi_am1, phi_am2, phi_quad]
        beta[2] = 6.0
        st = ModelStructure((), (), (0, 2), (1,))
    else:
        beta[:3] = (3.0, 4.0, -2.0)
        funcs[:3] = [_Linear(b) for b in beta[:3]]
        st = ModelStructure((), (0, 1, 2), (), ())
    return Truth(st, alpha, beta, funcs, spec.sigma)


def generate(spec, replicate=0):
    """Simulate one raw (uncentered) dataset and its truth.

    Replicate ``k`` draws from the stream ``spec.seed + k``.
    """
    rng = make_rng(spec.seed, replicate)
    truth = truth_for(spec)
    n = spec.n
    p1 = truth.alpha.shape[0]
    z = (rng.uniform(0.0, 1.0, size=(n, p1)) > 0.75).astype(float)
    x = rng.uniform(-0.5, 0.5, size=(n, spec.p2))
    eps = rng.normal(0.0, 1.0, size=n) * spec.sigma
    y = z @ truth.alpha + eps
    for l, f in enumerate(truth.funcs):
        if f is not None:
            y = y + f(x[:, l])
    return Dataset(y, z, x), truth


# -- metrics ------------------------------------------------------------------

def selection_counts(truth, est, p1, p2):
    """Numerator/denominator pairs for every selection statistic."""
    t, e = truth, est
    tz, ez = set(t.s_z), set(e.s_z)
    pl, ln, pn = set(t.s_x_pl), set(t.s_x_ln), set(t.s_x_pn)
    epl, eln, epn = set(e.s_x_pl), set(e.s_x_ln), set(e.s_x_pn)
    tx, ex = pl | ln | pn, epl | eln | epn
    z0 = set(range(p1)) - tz
    x0 = set(range(p2)) - tx
    nonlin_t = ln | pn
    return {
        "corrZ": (len(tz & ez), len(tz)),
        "corrZ0": (len(z0 - ez), len(z0)),
        "corrL": (len(pl & epl), len(pl)),
        "corrN": (len(pn & epn), len(pn)),
        "corrLN": (len(ln & eln), len(ln)),
        "corrX0": (len(x0 - ex), len(x0)),
        "Zto0": (len(tz - ez), len(tz)),
        "LtoN": (len(pl & (eln | epn)), len(pl)),
        "NtoL": (len(nonlin_t & epl), len(nonlin_t)),
        "Xto0": (len(tx - ex), len(tx)),
    }


def _pct(num, den):
    return 100.0 * num / den if den else float("nan")


def selection_metrics(truth, estimated, p1=None, p2=None):
    """Percentages for the ten selection statistics (NaN when a reference set is empty)."""
    st = truth.structure if isinstance(truth, Truth) else truth
    if p1 is None or p2 is None:
        if not isinstance(truth, Truth):
            raise InvalidArgs("index universe sizes are required with a bare structure")
        p1, p2 = truth.alpha.shape[0], truth.beta.shape[0]
    return {k: _pct(*v) for k, v in selection_counts(st, estimated, p1, p2).items()}


def pooled_selection_metrics(counts_list):
    """Per-column-per-replicate pooling of :func:`selection_counts` results."""
    out = {}
    for k in METRIC_COLUMNS:
        num = sum(c[k][0] for c in counts_list)
        den = sum(c[k][1] for c in counts_list)
        out[k] = _pct(num, den)
    return out


def amse(phi_hat, phi_true):
    d = np.asarray(phi_hat, dtype=float) - np.asarray(phi_true, dtype=float)
    return float(np.mean(d * d))


def component_estimate(fitted, ds, l):
    """Estimated component ``l`` at the sample points (centered scale).

    Nonlinear components use the SBLL curve at every sample point; pure
    linear components are ``beta_hat * (x - mean)``; absent ones are zero.
    """
    cds = ds if ds.centered else center(ds)
    x = cds.raw_x()[:, l]
    st = fitted.structure
    if l in st.s_x_n:
        yy = pseudo_responses(cds, st, fitted.refit, l)
        est, _ = local_linear_grid(x, yy, rot_bandwidth(x, yy), x)
        return est
    if l in st.s_x_pl:
        return fitted.refit.beta[l] * cds.x[:, l]
    return np.zeros(cds.n)


def linear_coefficient(fitted, ds, l):
    """Slope estimate for X column ``l``.

    For a column fitted as nonlinear the least-squares slope of its spline
    component on the covariate is reported.
    """
    st = fitted.structure
    if l in st.s_x_pl:
        return float(fitted.refit.beta[l])
    if l in st.s_x_n:
        cds = ds if ds.centered else center(ds)
        xc = cds.x[:, l]
        f = fitted.refit.component(l, cds.raw_x()[:, l])
        return float((xc @ (f - f.mean())) / (xc @ xc))
    return 0.0


def estimation_metrics(truth, fitted, ds, n_alpha=3):
    """Squared errors for ``alpha_1..n_alpha``, linear slopes and AMSE per active component.

    AMSE compares against the true component centered at the sample, which
    is the curve the pseudo-responses estimate.
    """
    cds = ds if ds.centered else center(ds)
    out = {}
    for k in range(min(n_alpha, truth.alpha.shape[0])):
        out[f"mse_alpha{k + 1}"] = float((fitted.refit.alpha[k] - truth.alpha[k]) ** 2)
    for l in truth.structure.s_x_pl:
        out[f"mse_beta{l + 1}"] = float((linear_coefficient(fitted, cds, l) - truth.beta[l]) ** 2)
    raw_x = cds.raw_x()
    for l in truth.structure.s_x:
        f = truth.phi(l, raw_x[:, l])
        out[f"amse_phi{l + 1}"] = amse(component_estimate(fitted, cds, l), f - f.mean())
    return out


def fold_ids(n, folds, seed):
    """Random near-equal partition of ``range(n)`` into ``folds`` labels."""
    if n < folds or folds < 2:
        raise InvalidArgs("need 2 <= folds <= n")
    rng = make_rng(seed, 0)
    lab = np.arange(n) % folds
    return lab[rng.permutation(n)]


def cv_mspe(ds, variant="SMILE", folds=10, seed=0, cfg=None, truth=None):
    """Mean over folds of the held-out mean squared prediction error."""
    cfg = cfg or SelectionConfig()
    raw = ds.subset(np.arange(ds.n)) if ds.centered else ds
    ids = fold_ids(raw.n, folds, seed)
    y = raw.raw_y()
    errs = []
    for f in range(folds):
        test = np.flatnonzero(ids == f)
        train = np.flatnonzero(ids != f)
        try:
            m = fit_variant(raw.subset(train), cfg, variant, truth)
        except SmileError as exc:
            raise type(exc)(f"fold {f}: {exc}") from exc
        pred = m.predict(raw.z[test], raw.raw_x()[test])
        errs.append(float(np.mean((pred - y[test]) ** 2)))
    return float(np.mean(errs))


def covered(curve, truth_values):
    return bool(np.all((truth_values >= curve.scb_lo) & (truth_values <= curve.scb_hi)))


def scb_coverage(cds, fitted, truth, alpha=0.05, center_truth=True):
    """Coverage indicator per true nonlinear component.

    The band is evaluated at the sample points inside ``[a + h, b - h]``; a
    component not selected as nonlinear counts as not covered. With
    ``center_truth`` the target is the true curve minus its sample mean,
    the curve the empirically centered pseudo-responses identify;
    otherwise the population-centered curve is used.
    """
    out = {}
    raw_x = cds.raw_x()
    for l in truth.structure.s_x_n:
        if l not in fitted.structure.s_x_n:
            out[l] = False
            continue
        x = raw_x[:, l]
        yy = pseudo_responses(cds, fitted.structure, fitted.refit, l)
        h = rot_bandwidth(x, yy)
        pts = np.sort(x[(x >= x.min() + h) & (x <= x.max() - h)])
        c = sbll_curve(cds, fitted.refit, fitted.structure, l, grid=pts, alpha=alpha, h=h)
        target = truth.phi(l, pts)
        if center_truth:
            target = target - truth.phi(l, x).mean()
        out[l] = covered(c, target)
    return out


def coverage_replicate(spec, replicate, cfg, alpha=0.05, variant="SMILE", center_truth=True):
    """One replicate's SCB coverage indicators for every true nonlinear component."""
    ds, truth = generate(spec, replicate)
    cds = center(ds)
    fitted = fit_variant(cds, cfg, variant, truth.structure)
    return scb_coverage(cds, fitted, truth, alpha, center_truth)


def coverage_experiment(spec, reps, alpha=0.05, cfg=None, n_jobs=1, variant="SMILE",
                        center_truth=True):
    """Percent of replicates whose SCB covers the truth at every interior sample point."""
    if reps < 1:
        raise InvalidArgs("reps must be positive")
    cfg = cfg or SelectionConfig()
    res = Parallel(n_jobs=n_jobs)(delayed(coverage_replicate)(spec, r, cfg, alpha, variant, center_truth)
                                  for r in range(reps))
    keys = truth_for(spec).structure.s_x_n
    return {l: 100.0 * sum(r[l] for r in res) / reps for l in keys}


# -- replicated experiments ---------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 300
    p1: int = 200
    p2: int = 200
    sigma: float = 0.5
    scenario: str = "APLM"
    reps: int = 100
    seed: int = 0
    variants: tuple = ("SMILE", "SAPLM", "SLM", "ORACLE")
    cv_folds: int = 10
    cv: bool = True
    coverage: bool = True
    alpha: float = 0.05
    selection: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise InvalidArgs(f"unknown experiment config keys: {sorted(extra)}")
        if "variants" in d:
            d["variants"] = tuple(d["variants"])
        return cls(**d)

    def spec(self):
        return DgpSpec(self.n, self.p1, self.p2, self.sigma, self.scenario, self.seed)

    def to_dict(self):
        d = asdict(self)
        d["variants"] = list(self.variants)
        return d


def run_replicate(exp, replicate):
    """Every requested variant on one simulated dataset."""
    spec = exp.spec()
    cfg = SelectionConfig.from_dict(exp.selection)
    ds, truth = generate(spec, replicate)
    cds = center(ds)
    p1, p2 = truth.alpha.shape[0], truth.beta.shape[0]
    out = {}
    for v in exp.variants:
        try:
            m = fit_variant(cds, cfg, v, truth.structure)
            rec = {"counts": selection_counts(truth.structure, m.structure, p1, p2),
                   "structure": m.structure.to_dict()}
            rec.update(estimation_metrics(truth, m, cds))
            if exp.cv:
                rec["cv_mspe"] = cv_mspe(ds, v, exp.cv_folds, spec.seed + replicate, cfg, truth.structure)
            if exp.coverage and v != "SLM":
                for l, ok in scb_coverage(cds, m, truth, exp.alpha).items():
                    rec[f"cover_phi{l + 1}"] = ok
        except SmileError as exc:
            raise type(exc)(f"replicate {replicate}, variant {v}: {exc}") from exc
        out[v] = rec
    return out


def aggregate(exp, results):
    """Deterministic reduction of replicate records into table rows."""
    rows = {}
    for v in exp.variants:
        recs = [r[v] for r in results]
        row = pooled_selection_metrics([r["counts"] for r in recs])
        keys = sorted({k for r in recs for k in r if k.startswith(("mse_", "amse_", "cv_mspe"))})
        for k in keys:
            vals = [r[k] for r in recs if k in r]
            row[k] = float(np.mean(vals))
        ckeys = sorted({k for r in recs for k in r if k.startswith("cover_")})
        for k in ckeys:
            row[k] = 100.0 * float(np.mean([r[k] for r in recs]))
        rows[v] = row
    return rows


def run_experiment(exp, n_jobs=1):
    """Run all replicates (in parallel when ``n_jobs > 1``) and aggregate."""
    results = Parallel(n_jobs=n_jobs)(delayed(run_replicate)(exp, r) for r in range(exp.reps))
    return aggregate(exp, results), results


def _fmt(v):
    if isinstance(v, float):
        return "NA" if math.isnan(v) else repr(round(v, 10))
    return str(v)


def write_tables(exp, rows, outdir):
    """Selection (two tables), estimation and coverage CSVs plus ``summary.json``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    lead = ["n", "sigma", "p", "Method"]
    ident = [exp.n, exp.sigma, exp.p1 + exp.p2]

    def write(name, cols, variants):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(lead + list(cols))
            for v in variants:
                w.writerow([_fmt(x) for x in ident] + [v] + [_fmt(rows[v].get(c, float("nan"))) for c in cols])

    sel_variants = [v for v in exp.variants if v != "ORACLE"]
    write("table1_selection.csv", METRIC_COLUMNS, sel_variants)
    write("table2_errors.csv", ERROR_COLUMNS, sel_variants)
    est_cols = sorted({k for v in exp.variants for k in rows[v]
                       if k.startswith(("mse_", "amse_"))}, key=_est_key) + ["cv_mspe"]
    write("table3_estimation.csv", est_cols, list(exp.variants))
    cov_cols = sorted({k for v in exp.variants for k in rows[v] if k.startswith("cover_")})
    if cov_cols:
        write("table4_coverage.csv", cov_cols, [v for v in exp.variants if v != "SLM"])
    summary = {"config": exp.to_dict(),
               "rows": {v: {k: (None if isinstance(x, float) and math.isnan(x) else x)
                            for k, x in rows[v].items()} for v in exp.variants}}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return out


def _est_key(k):
    order = {"mse_alpha": 0, "mse_beta": 1, "amse_phi": 2}
    for p, i in order.items():
        if k.startswith(p):
            return (i, int(k[len(p):]))
    return (9, 0)
