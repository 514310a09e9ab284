"""Pure-numpy group coordinate-descent sweep (fallback for the compiled kernel)."""

import math

import numpy as np


def _secular(c, lam, t, cn):
    # root of mu * ||eta(mu)|| = t; the left side increases from 0 to ||c||
    lo = t * lam.min() / (cn - t)
    hi = t * lam.max() / (cn - t)
    if hi - lo <= 1e-15 * hi:
        return hi
    mu = hi
    c2 = c * c
    for _ in range(200):
        q = 1.0 / (lam + mu)
        s2 = float(c2 @ (q * q))
        s3 = float(c2 @ (q * q * q))
        nrm = math.sqrt(s2)
        if mu * nrm - t > 0:
            hi = mu
        else:
            lo = mu
        step = (1.0 / nrm - mu / t) / (s3 / nrm**3 - 1.0 / t)
        mnew = mu - step
        if not lo < mnew < hi:
            mnew = 0.5 * (lo + hi)
        if abs(mnew - mu) <= 1e-15 * mu or hi - lo <= 1e-15 * hi:
            return mnew
        mu = mnew
    return mu


def group_update(b, theta_old, evals, V, t):
    """Exact minimizer of ``0.5 u'Gu - (b + G theta_old)'u + t||u||`` with ``G = V diag(evals) V'``."""
    c = V.T @ b + evals * (V.T @ theta_old)
    cn = math.sqrt(float(c @ c))
    lmax = evals.max()
    if cn <= t or lmax <= 0.0:
        return np.zeros_like(theta_old)
    if t == 0.0:
        eta = np.where(evals > 1e-12 * lmax, c / np.where(evals > 0, evals, 1.0), 0.0)
    else:
        eta = c / (evals + _secular(c, evals, t, cn))
    u = V @ eta
    if math.sqrt(float(u @ u)) < 1e-14:
        u[:] = 0.0
    return u


def sweep(X, r, theta, starts, sizes, voff, evals, evecs, thresh, order, work):
    """Same contract as the compiled ``sweep``; ``work`` is unused."""
    maxchg = 0.0
    for g in order:
        t = thresh[g]
        if math.isinf(t):
            continue
        s = starts[g]
        d = sizes[g]
        if d == 1:
            col = X[:, s]
            lam = evals[s]
            old = theta[s]
            cval = float(col @ r) + lam * old
            new = 0.0 if (abs(cval) <= t or lam <= 0.0) else (cval - math.copysign(t, cval)) / lam
            if abs(new) < 1e-14:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                theta[s] = new
                r -= delta * col
                maxchg = max(maxchg, abs(delta))
            continue
        block = X[:, s:s + d]
        V = evecs[voff[g]:voff[g] + d * d].reshape(d, d)
        u = group_update(block.T @ r, theta[s:s + d], evals[s:s + d], V, t)
        delta = u - theta[s:s + d]
        if np.any(delta != 0.0):
            theta[s:s + d] = u
            r -= block @ delta
            maxchg = max(maxchg, float(np.abs(delta).max()))
    return maxchg
