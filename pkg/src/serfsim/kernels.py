"""Hot loops: the quantile-regression simplex and the yield recursion.

Each kernel exists twice, a numba version written with explicit loops and a
vectorised numpy version with the same pivoting and arithmetic order. The
module-level names ``rq_simplex`` and ``yield_paths`` point at the numba
versions unless numba is missing or ``SERFSIM_NO_NUMBA=1``.
"""

from __future__ import annotations

import numpy as np

from ._accel import NUMBA_OK, njit

# kernel status codes
OPTIMAL = 0
ITERATION_LIMIT = 1
UNBOUNDED = 2

RC_TOL = 1e-9
PIVOT_TOL = 1e-9  # per row, relative to sum|x_ic||d_c| floored at max|d|
RESID_TOL = 1e-11  # relative to 1 + max|y|; smaller residuals count as zero


# -- quantile regression simplex ----------------------------------------------
#
# Primal: minimise tau*sum(u) + (1-tau)*sum(v)  s.t.  X b + u - v = y, u, v >= 0.
# A vertex is described by k "basis rows" h (fitted exactly, u_i and v_i both
# nonbasic) plus, for every other row, which of u_i / v_i is basic ("twin").
# Variable indices for Bland's rule: b_0..b_{k-1}, u_0..u_{n-1}, v_0..v_{n-1}.
#
# The entering variable is the lowest-indexed one with negative reduced cost.
# The ratio test is the bounded-variable long step: walk the residual sign
# changes in order of step length (ties in variable-index order), flipping
# u/v for each row crossed, and stop at the first row whose crossing makes
# the directional derivative non-negative. That row joins h. A zero-length
# step (degenerate vertex) instead takes the first tied breakpoint without
# flips, i.e. the plain Bland pivot, so the method cannot cycle.

def rq_simplex_numpy(X, y, tau, h, max_iter):
    n, k = X.shape
    h = h.copy()
    rows = np.arange(n)
    in_h = np.zeros(n, dtype=np.bool_)
    in_h[h] = True
    beta = np.linalg.solve(X[h], y[h])
    r = y - X @ beta
    twin = np.where(r < 0.0, -1, 1).astype(np.int8)
    twin[in_h] = 0
    rtol = RESID_TOL * (1.0 + np.abs(y).max())
    status = ITERATION_LIMIT
    it = 0
    while it < max_iter:
        Xh = X[h]
        beta = np.linalg.solve(Xh, y[h])
        r = y - X @ beta
        r[h] = 0.0

        w = np.where(twin > 0, tau, tau - 1.0)
        w[in_h] = 0.0
        pi_h = -np.linalg.solve(Xh.T, X.T @ w)
        tol = RC_TOL * max(1.0, np.abs(pi_h).max())
        rc_u = tau - pi_h
        rc_v = (1.0 - tau) + pi_h
        if (rc_u < -tol).any():
            sigma = 1.0
            pos = np.flatnonzero(rc_u < -tol)
            p = pos[np.argmin(h[pos])]
            slope = rc_u[p]
        elif (rc_v < -tol).any():
            sigma = -1.0
            pos = np.flatnonzero(rc_v < -tol)
            p = pos[np.argmin(h[pos])]
            slope = rc_v[p]
        else:
            status = OPTIMAL
            break

        e = np.zeros(k)
        e[p] = 1.0
        d = np.linalg.solve(Xh, e)
        g = sigma * (X @ d)
        gtol = PIVOT_TOL * np.maximum(np.abs(X) @ np.abs(d), np.abs(d).max())
        free = ~in_h
        fwd_u = rows[free & (twin > 0) & (g < -gtol)]
        fwd_v = rows[free & (twin < 0) & (g > gtol)]
        cand = np.concatenate((fwd_u, fwd_v))
        if cand.size == 0:
            status = UNBOUNDED
            break
        ru = r[fwd_u]
        rv = -r[fwd_v]
        ratio = np.concatenate((np.where(ru > rtol, ru, 0.0) / -g[fwd_u],
                                np.where(rv > rtol, rv, 0.0) / g[fwd_v]))
        perm = np.argsort(ratio, kind="mergesort")
        order = cand[perm]
        cum = slope + np.cumsum(np.abs(g[order]))
        hit = np.flatnonzero(cum >= -tol)
        if hit.size == 0:
            status = UNBOUNDED
            break
        stop = hit[0]
        if ratio[perm[stop]] == 0.0:
            stop = 0
        leave = order[stop]
        crossed = order[:stop]
        twin[crossed] = -twin[crossed]

        j = h[p]
        in_h[j] = False
        twin[j] = 1 if sigma > 0 else -1
        h[p] = leave
        in_h[leave] = True
        twin[leave] = 0
        it += 1
    return beta, h, twin, status, it


@njit(cache=True)
def _rq_simplex_numba(X, y, tau, h, max_iter):
    n, k = X.shape
    h = h.copy()
    in_h = np.zeros(n, dtype=np.bool_)
    for p in range(k):
        in_h[h[p]] = True
    Xh = np.empty((k, k))
    XhT = np.empty((k, k))
    yh = np.empty(k)
    r = np.empty(n)
    g = np.empty(n)
    gtol = np.empty(n)
    s = np.empty(k)
    e = np.empty(k)
    cand = np.empty(n, dtype=np.int64)
    ratio = np.empty(n)
    twin = np.zeros(n, dtype=np.int8)
    ymax = 0.0
    for i in range(n):
        ymax = max(ymax, abs(y[i]))
    rtol = RESID_TOL * (1.0 + ymax)

    for p in range(k):
        for c in range(k):
            Xh[p, c] = X[h[p], c]
        yh[p] = y[h[p]]
    beta = np.linalg.solve(Xh, yh)
    for i in range(n):
        acc = 0.0
        for c in range(k):
            acc += X[i, c] * beta[c]
        if not in_h[i]:
            twin[i] = -1 if y[i] - acc < 0.0 else 1

    status = ITERATION_LIMIT
    it = 0
    while it < max_iter:
        for p in range(k):
            for c in range(k):
                Xh[p, c] = X[h[p], c]
                XhT[c, p] = X[h[p], c]
            yh[p] = y[h[p]]
        beta = np.linalg.solve(Xh, yh)
        for c in range(k):
            s[c] = 0.0
        for i in range(n):
            if in_h[i]:
                r[i] = 0.0
                continue
            acc = 0.0
            for c in range(k):
                acc += X[i, c] * beta[c]
            r[i] = y[i] - acc
            wi = tau if twin[i] > 0 else tau - 1.0
            for c in range(k):
                s[c] += X[i, c] * wi
        pi_h = -np.linalg.solve(XhT, s)
        tol = 1.0
        for p in range(k):
            tol = max(tol, abs(pi_h[p]))
        tol *= RC_TOL

        p_enter = -1
        sigma = 0.0
        slope = 0.0
        for p in range(k):
            if (tau - pi_h[p]) < -tol:
                if p_enter < 0 or h[p] < h[p_enter]:
                    p_enter = p
        if p_enter >= 0:
            sigma = 1.0
            slope = tau - pi_h[p_enter]
        else:
            for p in range(k):
                if ((1.0 - tau) + pi_h[p]) < -tol:
                    if p_enter < 0 or h[p] < h[p_enter]:
                        p_enter = p
            if p_enter >= 0:
                sigma = -1.0
                slope = (1.0 - tau) + pi_h[p_enter]
        if p_enter < 0:
            status = OPTIMAL
            break

        for c in range(k):
            e[c] = 0.0
        e[p_enter] = 1.0
        d = np.linalg.solve(Xh, e)
        dmax = 0.0
        for c in range(k):
            dmax = max(dmax, abs(d[c]))
        for i in range(n):
            acc = 0.0
            mag = 0.0
            for c in range(k):
                acc += X[i, c] * d[c]
                mag += abs(X[i, c]) * abs(d[c])
            g[i] = sigma * acc
            gtol[i] = PIVOT_TOL * max(mag, dmax)

        m = 0
        for i in range(n):
            if not in_h[i] and twin[i] > 0 and g[i] < -gtol[i]:
                cand[m] = i
                ratio[m] = (r[i] if r[i] > rtol else 0.0) / -g[i]
                m += 1
        for i in range(n):
            if not in_h[i] and twin[i] < 0 and g[i] > gtol[i]:
                cand[m] = i
                ratio[m] = (-r[i] if -r[i] > rtol else 0.0) / g[i]
                m += 1
        order = np.argsort(ratio[:m], kind="mergesort")
        leave = -1
        stop = 0
        for q in range(m):
            slope += abs(g[cand[order[q]]])
            if slope >= -tol:
                leave = cand[order[q]]
                stop = q
                break
        if leave < 0:
            status = UNBOUNDED
            break
        if ratio[order[stop]] == 0.0:
            stop = 0
            leave = cand[order[0]]
        for q in range(stop):
            i = cand[order[q]]
            twin[i] = -twin[i]

        j = h[p_enter]
        in_h[j] = False
        twin[j] = 1 if sigma > 0 else -1
        h[p_enter] = leave
        in_h[leave] = True
        twin[leave] = 0
        it += 1
    return beta, h, twin, status, it


# -- yield recursion ------------------------------------------------------------

def yield_paths_numpy(intercept, lag, bii_coef, trend, bii, noise, y0, t0):
    """Iterate y_t = intercept + lag*y_{t-1} + bii_coef*bii_t + trend*t (+ noise), clamped at 0.

    ``bii`` and ``noise`` are (draws, harvests); returns (yields, clamp_count).
    """
    n_draws, n_h = bii.shape
    out = np.empty((n_draws, n_h))
    prev = np.full(n_draws, float(y0))
    clamps = 0
    for s in range(n_h):
        t = float(t0 + s)
        pred = intercept + lag * prev + bii_coef * bii[:, s] + trend * t + noise[:, s]
        neg = pred < 0.0
        clamps += int(neg.sum())
        pred[neg] = 0.0
        out[:, s] = pred
        prev = pred
    return out, clamps


@njit(cache=True)
def _yield_paths_numba(intercept, lag, bii_coef, trend, bii, noise, y0, t0):
    n_draws, n_h = bii.shape
    out = np.empty((n_draws, n_h))
    clamps = 0
    for d in range(n_draws):
        prev = y0
        for s in range(n_h):
            t = float(t0 + s)
            pred = intercept + lag * prev + bii_coef * bii[d, s] + trend * t + noise[d, s]
            if pred < 0.0:
                pred = 0.0
                clamps += 1
            out[d, s] = pred
            prev = pred
    return out, clamps


if NUMBA_OK:
    rq_simplex_numba = _rq_simplex_numba
    yield_paths_numba = _yield_paths_numba
    rq_simplex = _rq_simplex_numba
    yield_paths = _yield_paths_numba
else:
    rq_simplex_numba = None
    yield_paths_numba = None
    rq_simplex = rq_simplex_numpy
    yield_paths = yield_paths_numpy
