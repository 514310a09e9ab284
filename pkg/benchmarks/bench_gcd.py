"""Compare the compiled and pure-numpy group coordinate-descent sweeps.

Usage::

    python benchmarks/bench_gcd.py [--n 300] [--p 200] [--repeat 5]

The design mimics the selection stage: ``p`` scalar linear groups plus
``p`` spline groups of width 4. Both backends start from the same state
and run the same number of sweeps; the script reports the best wall time
per sweep and the largest coefficient difference between the two.
"""

import argparse
import time

import numpy as np

from smile import _gcd_py
from smile.solver import GroupedDesign, PenaltySpec, lambda_max

try:
    from smile import _gcd
except ImportError:
    _gcd = None


def make_design(n, p, nb, seed):
    rng = np.random.default_rng(seed)
    xl = rng.standard_normal((n, p))
    splines = [np.linalg.qr(rng.standard_normal((n, nb)))[0] * np.sqrt(n) for _ in range(p)]
    y = xl[:, :3] @ np.array([3.0, -2.0, 1.5]) + splines[3] @ rng.standard_normal(nb) \
        + rng.standard_normal(n)
    return GroupedDesign.from_arrays(y, x_linear=xl, splines=splines)


def run(sweep, design, thresh, sweeps):
    theta = np.zeros(design.X.shape[1])
    r = design.y.copy()
    order = np.arange(design.n_groups, dtype=np.intp)
    work = np.zeros(4 * int(design.sizes.max()))
    t0 = time.perf_counter()
    for _ in range(sweeps):
        sweep(design.X, r, theta, design.starts, design.sizes, design.voff,
              design.evals, design.evecs, thresh, order, work)
    return time.perf_counter() - t0, theta


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--p", type=int, default=200)
    ap.add_argument("--basis", type=int, default=4)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    design = make_design(args.n, args.p, args.basis, args.seed)
    lam = 0.1 * lambda_max(design)
    thresh = design.thresholds(PenaltySpec.common(lam))
    backends = [("python", _gcd_py.sweep)]
    if _gcd is not None:
        backends.insert(0, ("cython", _gcd.sweep))
    else:
        print("compiled kernel not built; timing the fallback only")

    print(f"n={args.n} groups={design.n_groups} columns={design.X.shape[1]} sweeps={args.sweeps}")
    best, thetas = {}, {}
    for name, fn in backends:
        times = []
        for _ in range(args.repeat):
            dt, thetas[name] = run(fn, design, thresh, args.sweeps)
            times.append(dt)
        best[name] = min(times) / args.sweeps
        print(f"{name:>7}: {1e3 * best[name]:9.3f} ms/sweep")
    if len(backends) == 2:
        diff = float(np.abs(thetas["cython"] - thetas["python"]).max())
        print(f"speedup: {best['python'] / best['cython']:.1f}x   max |theta diff|: {diff:.2e}")


if __name__ == "__main__":
    main()
