"""Command-line front end: ``smile fit``, ``smile simulate``, ``smile bands``.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisBlock
from .data import center, load_csv
from .errors import InputError, MissingColumn, NumericalError, SmileError
from .inference import coef_covariance, pseudo_responses, sbll_band, sbll_curve, write_curve_csv
from .kernel import rot_bandwidth
from .selection import SelectionConfig, fit_variant
from .simulation import ExperimentConfig, run_experiment, write_tables
from .solver import BACKEND

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except SmileError as exc:
        raise StageError(name, exc) from exc


def _threads(args):
    if args.threads:
        return int(args.threads)
    env = os.environ.get("SMILE_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path, what):
    p = Path(path)
    if not p.is_file():
        raise MissingColumn(f"{what} {path} not found")
    with open(p) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{what} {path} is not valid JSON: {exc}") from None


def _safe_name(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def cmd_fit(args):
    t0 = time.perf_counter()
    out = Path(args.out)
    roles = None
    if args.roles:
        roles = _stage("roles", _read_json, args.roles, "roles file")
        if "response" not in roles:
            raise StageError("roles", MissingColumn("roles file has no 'response' entry"))
        roles.setdefault("z", [])
        roles.setdefault("x", [])
    cfg_d = _stage("config", _read_json, args.config, "config file") if args.config else {}
    cfg = _stage("config", SelectionConfig.from_dict, cfg_d)
    ds = _stage("load", load_csv, args.input, roles)
    cds = _stage("center", center, ds)
    model = _stage("select", fit_variant, cds, cfg)
    st = model.structure
    t_fit = time.perf_counter() - t0

    out.mkdir(parents=True, exist_ok=True)
    (out / "curves").mkdir(exist_ok=True)
    _dump_json(st.to_dict(cds.z_names, cds.x_names), out / "structure.json")

    cov, labels = _stage("covariance", coef_covariance, model.refit, cds, st)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0)) if cov.size else np.zeros(0)
    est = [model.refit.alpha[k] for k in st.s_z] + [model.refit.beta[l] for l in st.s_x_pl]
    blocks = ["z"] * len(st.s_z) + ["x_linear"] * len(st.s_x_pl)
    with open(out / "coefficients.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "block", "estimate", "stderr"])
        for name, blk, e, s in zip(labels, blocks, est, se):
            w.writerow([name, blk, repr(float(e)), repr(float(s))])

    comps = {}
    raw_x = cds.raw_x()
    for l in st.s_x_n:
        name = cds.x_names[l]
        yy = pseudo_responses(cds, st, model.refit, l)
        h = _stage(f"bandwidth[{name}]", rot_bandwidth, raw_x[:, l], yy)
        grid = np.linspace(raw_x[:, l].min() + h, raw_x[:, l].max() - h, args.grid)
        curve = _stage(f"bands[{name}]", sbll_curve, cds, model.refit, st, l, grid, args.alpha, h)
        write_curve_csv(curve, out / "curves" / f"{_safe_name(name)}.csv")
        comps[name] = {
            "index": l,
            "x": raw_x[:, l].tolist(),
            "pseudo_response": yy.tolist(),
            "basis": model.refit.bases[l].to_dict(),
            "gamma": model.refit.gamma[l].tolist(),
        }
    _dump_json({"format": "smile-model/1", "sigma2_hat": model.refit.sigma2_hat,
                "order": model.refit.order, "refit": model.refit.to_dict(),
                "components": comps}, out / "model.json")
    _dump_json({
        "command": "fit", "input": str(args.input), "roles": args.roles, "config": cfg.to_dict(),
        "seed": args.seed, "alpha": args.alpha, "grid": args.grid, "threads": _threads(args),
        "versions": {"smile": __version__, "numpy": np.__version__, "python": platform.python_version(),
                     "backend": BACKEND},
        "timings": {"fit_seconds": t_fit, "total_seconds": time.perf_counter() - t0},
    }, out / "run_meta.json")
    return EXIT_OK


def cmd_bands(args):
    src = Path(args.input)
    mpath = src / "model.json"
    if not mpath.is_file():
        raise StageError("load", MissingColumn(f"no model.json in {src}; run 'smile fit' first"))
    model = _stage("load", _read_json, mpath, "model file")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigma = math.sqrt(model["sigma2_hat"])
    for name, comp in sorted(model["components"].items()):
        x = np.asarray(comp["x"])
        yy = np.asarray(comp["pseudo_response"])
        blk = BasisBlock.from_dict(comp["basis"])
        gamma = np.asarray(comp["gamma"])
        h = _stage(f"bandwidth[{name}]", rot_bandwidth, x, yy)
        grid = np.linspace(x.min() + h, x.max() - h, args.grid)
        bias_fn = None if model["order"] < 3 else (lambda g, b=blk, c=gamma: b.curve(c, g, nu=2))
        curve = _stage(f"bands[{name}]", sbll_band, x, yy, h, grid, sigma, args.alpha, bias_fn)
        write_curve_csv(curve, out / f"{_safe_name(name)}.csv")
    return EXIT_OK


def cmd_simulate(args):
    t0 = time.perf_counter()
    d = _stage("config", _read_json, args.config, "experiment config") if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    exp = _stage("config", ExperimentConfig.from_dict, d)
    rows, _ = _stage("simulate", run_experiment, exp, _threads(args))
    out = write_tables(exp, rows, args.out)
    _dump_json({"command": "simulate", "config": exp.to_dict(), "threads": _threads(args),
                "versions": {"smile": __version__, "numpy": np.__version__, "backend": BACKEND},
                "timings": {"total_seconds": time.perf_counter() - t0}}, out / "run_meta.json")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="smile", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $SMILE_THREADS or all cores)")

    f = sub.add_parser("fit", help="select, refit and build bands for a CSV dataset")
    f.add_argument("--input", required=True, help="CSV file with a header row")
    f.add_argument("--roles", help="JSON role map {response, z, x}; default: y / z_* / x_* names")
    f.add_argument("--config", help="selection config JSON")
    f.add_argument("--alpha", type=float, default=0.05)
    f.add_argument("--grid", type=int, default=101, help="band grid size")
    common(f)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a replicated simulation experiment")
    s.add_argument("--config", help="experiment config JSON")
    common(s)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bands", help="recompute band tables from a fit output directory")
    b.add_argument("--input", required=True, help="directory written by 'smile fit'")
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--grid", type=int, default=101)
    common(b)
    b.set_defaults(func=cmd_bands)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    alpha = getattr(args, "alpha", None)
    if alpha is not None and not 0 < alpha < 1:
        print("error [args]: InvalidArgs: alpha must lie in (0, 1)", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "grid", 2) < 2:
        print("error [args]: InvalidArgs: --grid needs at least 2 points", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except StageError as err:
        code = EXIT_NUMERIC if isinstance(err.exc, NumericalError) else EXIT_INPUT
        print(f"error [{err}]", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error [io]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
