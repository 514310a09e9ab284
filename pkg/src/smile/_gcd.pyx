# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled group coordinate-descent sweep.

Each group is minimized exactly given the others. With the group Gram
matrix ``G = V diag(lam) V^T`` cached, the group problem

    min_u  0.5 u^T G u - b^T u + t ||u||,   b = D_m^T r + G theta_old

has solution ``u = V eta`` with ``eta_k = c_k / (lam_k + mu)``,
``c = V^T b`` and ``mu`` the root of ``mu ||eta(mu)|| = t``; ``u = 0``
whenever ``||c|| <= t``.
"""

from libc.math cimport sqrt, fabs, isinf, copysign
from scipy.linalg.cython_blas cimport ddot, daxpy


cdef double _secular(const double* c, const double* lam, Py_ssize_t d,
                     double t, double cn) noexcept nogil:
    # root of mu * ||eta(mu)|| = t; the left side increases from 0 to ||c||
    cdef double lmin = lam[0], lmax = lam[0], lo, hi, mu, s2, s3, q, g, nrm, step, mnew
    cdef Py_ssize_t k, it
    for k in range(1, d):
        if lam[k] < lmin:
            lmin = lam[k]
        if lam[k] > lmax:
            lmax = lam[k]
    lo = t * lmin / (cn - t)
    hi = t * lmax / (cn - t)
    if hi - lo <= 1e-15 * hi:
        return hi
    mu = hi
    for it in range(200):
        s2 = 0.0
        s3 = 0.0
        for k in range(d):
            q = 1.0 / (lam[k] + mu)
            s2 += c[k] * c[k] * q * q
            s3 += c[k] * c[k] * q * q * q
        nrm = sqrt(s2)
        g = mu * nrm - t
        if g > 0:
            hi = mu
        else:
            lo = mu
        # Newton on 1/||eta|| - mu/t, which is close to linear in mu
        step = (1.0 / nrm - mu / t) / (s3 / (nrm * nrm * nrm) - 1.0 / t)
        mnew = mu - step
        if not (mnew > lo and mnew < hi):
            mnew = 0.5 * (lo + hi)
        if fabs(mnew - mu) <= 1e-15 * mu or hi - lo <= 1e-15 * hi:
            return mnew
        mu = mnew
    return mu


def sweep(double[::1, :] X, double[::1] r, double[::1] theta,
          Py_ssize_t[::1] starts, Py_ssize_t[::1] sizes, Py_ssize_t[::1] voff,
          double[::1] evals, double[::1] evecs, double[::1] thresh,
          Py_ssize_t[::1] order, double[::1] work):
    """One cyclic pass over the groups listed in ``order``.

    Updates ``theta`` and the residual ``r`` in place and returns the
    largest absolute coefficient change. ``work`` must hold ``4 * max(sizes)``
    doubles.
    """
    cdef int n = <int>X.shape[0]
    cdef int one = 1
    cdef Py_ssize_t k, g, s, d, j, a
    cdef double t, lam, grad, old, cval, new, delta, nd, maxchg = 0.0
    cdef double cn, mu, acc, unorm, lmax
    cdef double* b
    cdef double* c
    cdef double* u
    cdef double* eta
    cdef const double* V
    with nogil:
        for k in range(order.shape[0]):
            g = order[k]
            t = thresh[g]
            if isinf(t):
                continue
            s = starts[g]
            d = sizes[g]
            if d == 1:
                lam = evals[s]
                old = theta[s]
                grad = ddot(&n, &X[0, s], &one, &r[0], &one)
                cval = grad + lam * old
                if fabs(cval) <= t or lam <= 0.0:
                    new = 0.0
                else:
                    new = (cval - copysign(t, cval)) / lam
                if fabs(new) < 1e-14:
                    new = 0.0
                delta = new - old
                if delta != 0.0:
                    theta[s] = new
                    nd = -delta
                    daxpy(&n, &nd, &X[0, s], &one, &r[0], &one)
                    if fabs(delta) > maxchg:
                        maxchg = fabs(delta)
                continue

            b = &work[0]
            c = &work[d]
            u = &work[2 * d]
            eta = &work[3 * d]
            V = &evecs[voff[g]]
            # b = D^T r ; c = V^T b + lam * V^T theta_old
            for j in range(d):
                b[j] = ddot(&n, &X[0, s + j], &one, &r[0], &one)
            cn = 0.0
            lmax = 0.0
            for a in range(d):
                acc = 0.0
                for j in range(d):
                    acc += V[j * d + a] * b[j]
                cval = 0.0
                for j in range(d):
                    cval += V[j * d + a] * theta[s + j]
                c[a] = acc + evals[s + a] * cval
                cn += c[a] * c[a]
                if evals[s + a] > lmax:
                    lmax = evals[s + a]
            cn = sqrt(cn)
            if cn <= t or lmax <= 0.0:
                for a in range(d):
                    eta[a] = 0.0
            elif t == 0.0:
                for a in range(d):
                    if evals[s + a] > 1e-12 * lmax:
                        eta[a] = c[a] / evals[s + a]
                    else:
                        eta[a] = 0.0
            else:
                mu = _secular(c, &evals[s], d, t, cn)
                for a in range(d):
                    eta[a] = c[a] / (evals[s + a] + mu)
            unorm = 0.0
            for j in range(d):
                acc = 0.0
                for a in range(d):
                    acc += V[j * d + a] * eta[a]
                u[j] = acc
                unorm += acc * acc
            if sqrt(unorm) < 1e-14:
                for j in range(d):
                    u[j] = 0.0
            for j in range(d):
                delta = u[j] - theta[s + j]
                if delta != 0.0:
                    theta[s + j] = u[j]
                    nd = -delta
                    daxpy(&n, &nd, &X[0, s + j], &one, &r[0], &one)
                    if fabs(delta) > maxchg:
                        maxchg = fabs(delta)
    return maxchg
