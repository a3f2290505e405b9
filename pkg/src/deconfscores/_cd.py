"""Numba kernels for penalized weighted least squares by coordinate descent.

The kernel sweeps only over a caller-supplied active index set and mutates
the coefficient vector and residual in place, so warm starts along a lambda
path are free.  Screening of inactive coordinates (KKT checks) happens
outside the kernel with BLAS matvecs.  Observation weights are explicit;
the unweighted linear problem passes a vector of ones.
"""

import numpy as np
from numba import njit

OBJ_TRACE_LEN = 2048


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _sweep(X, r, w, b, b0, xtx, lam, l1, n, idx, nonzero_only, fit_intercept):
    """One coordinate sweep over idx; returns (max coef change, intercept)."""
    maxdelta = 0.0
    for k in range(idx.shape[0]):
        j = idx[k]
        bj = b[j]
        if nonzero_only and bj == 0.0:
            continue
        if xtx[j] <= 0.0:
            continue
        rho = bj * xtx[j]
        for i in range(X.shape[0]):
            rho += w[i] * X[i, j] * r[i] / n
        if l1:
            bnew = _soft(rho, lam) / xtx[j]
        else:
            bnew = rho / (xtx[j] + lam)
        d = bnew - bj
        if d != 0.0:
            for i in range(X.shape[0]):
                r[i] -= X[i, j] * d
            b[j] = bnew
            if abs(d) > maxdelta:
                maxdelta = abs(d)
    if fit_intercept:
        num = 0.0
        den = 0.0
        for i in range(X.shape[0]):
            num += w[i] * r[i]
            den += w[i]
        d0 = num / den
        if d0 != 0.0:
            for i in range(X.shape[0]):
                r[i] -= d0
            b0 += d0
            if abs(d0) > maxdelta:
                maxdelta = abs(d0)
    return maxdelta, b0


@njit(cache=True)
def _objective(r, w, b, lam, l1, n):
    obj = 0.0
    for i in range(r.shape[0]):
        obj += 0.5 * w[i] * r[i] * r[i] / n
    pen = 0.0
    for j in range(b.shape[0]):
        pen += abs(b[j]) if l1 else 0.5 * b[j] * b[j]
    return obj + lam * pen


@njit(cache=True)
def cd_solve(X, r, w, b, b0, xtx, lam, l1, tol, max_sweeps, fit_intercept,
             idx, obj_trace):
    """Coordinate descent over idx to tolerance tol on max coefficient change.

    Alternates sweeps over all of idx with sweeps restricted to its nonzero
    coefficients.  Mutates r and b; returns (intercept, sweeps used,
    converged flag, number of recorded objectives).  Objective values after
    each all-of-idx sweep land in obj_trace (capped at its length).
    """
    n = float(X.shape[0])
    sweeps = 0
    nobj = 0
    converged = False
    while sweeps < max_sweeps:
        maxdelta, b0 = _sweep(X, r, w, b, b0, xtx, lam, l1, n, idx, False,
                              fit_intercept)
        sweeps += 1
        if nobj < obj_trace.shape[0]:
            obj_trace[nobj] = _objective(r, w, b, lam, l1, n)
            nobj += 1
        if maxdelta < tol:
            converged = True
            break
        while sweeps < max_sweeps:
            maxdelta, b0 = _sweep(X, r, w, b, b0, xtx, lam, l1, n, idx, True,
                                  fit_intercept)
            sweeps += 1
            if maxdelta < tol:
                break
    return b0, sweeps, converged, nobj


@njit(cache=True)
def weighted_xtx_at(X, w, idx, out):
    """Fill out[j] = (1/n) sum_i w_i X_ij^2 for j in idx."""
    n = float(X.shape[0])
    for k in range(idx.shape[0]):
        j = idx[k]
        s = 0.0
        for i in range(X.shape[0]):
            s += w[i] * X[i, j] * X[i, j]
        out[j] = s / n
