"""Compiled inner loops for the penalized Poisson fit.

Coordinates live in a working basis: ``n_unpen`` orthonormal columns spanning
the cubic polynomial, followed by the standardized radial columns projected off
that span.  The line coefficients never appear explicitly here: each one only
touches its own bin, so for a fixed smooth part its optimum is available in
closed form and the bin's contribution is replaced by the profiled term

    f_i(u) = max_eta  z_i (u + eta) - exp(u + eta) - lam_e |eta|

with ``u`` the log collapsed mean without the line.  ``f_i`` is concave and
continuously differentiable, with derivative ``clip(z_i - exp(u), -lam_e, lam_e)``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

WEIGHT_FLOOR = 1e-10
ASCENT_SLACK = 1e-10
# cap on coordinate sweeps per quadratic model; an unfinished step is still an ascent direction
SWEEPS_PER_STEP = 200
POLISH_EVERY = 5
CLIP_CURV = 1e-3  # curvature on linear (clipped) pieces, relative to mu


@njit(cache=True, nogil=True)
def profile_terms(z, u, lam_e, nonneg, g, h):
    """Fill gradient ``g`` and working curvature ``h``; return the summed profiled value.

    Outside the band ``|z - mu| <= lam_e`` the profiled term is linear in ``u``.
    Its generalized second derivative there is zero; a small multiple of ``mu``
    keeps the Newton system well posed (semismooth Newton with a line search).
    """
    total = 0.0
    for i in range(z.shape[0]):
        ui = u[i]
        zi = z[i]
        mu = math.exp(ui)
        r = zi - mu
        if r > lam_e:
            a = zi - lam_e
            la = math.log(a)
            total += zi * la - a - lam_e * (la - ui)
            g[i] = lam_e
            h[i] = CLIP_CURV * mu
        elif r < -lam_e and not nonneg:
            a = zi + lam_e
            if a > 0:
                la = math.log(a)
                total += (zi * la if zi > 0 else 0.0) - a - lam_e * (ui - la)
                hi = CLIP_CURV * mu
            else:
                # lam_e == 0 and z == 0: supremum 0 approached as eta -> -inf
                hi = 0.0
            g[i] = -lam_e
            h[i] = max(hi, WEIGHT_FLOOR)
        else:
            total += zi * ui - mu
            g[i] = r
            h[i] = max(mu, WEIGHT_FLOOR)
    return total


@njit(cache=True, nogil=True)
def profile_value(z, u, lam_e, nonneg):
    total = 0.0
    for i in range(z.shape[0]):
        ui = u[i]
        zi = z[i]
        mu = math.exp(ui)
        r = zi - mu
        if r > lam_e:
            a = zi - lam_e
            la = math.log(a)
            total += zi * la - a - lam_e * (la - ui)
        elif r < -lam_e and not nonneg:
            a = zi + lam_e
            if a > 0:
                la = math.log(a)
                total += (zi * la if zi > 0 else 0.0) - a - lam_e * (ui - la)
        else:
            total += zi * ui - mu
    return total


@njit(cache=True, nogil=True)
def line_coefficients(z, u, lam_e, nonneg, out):
    """Closed-form optimal line coefficient for each bin given the smooth part ``u``."""
    for i in range(z.shape[0]):
        mu = math.exp(u[i])
        r = z[i] - mu
        if r > lam_e:
            out[i] = math.log(z[i] - lam_e) - u[i]
        elif r < -lam_e and not nonneg:
            a = z[i] + lam_e
            out[i] = math.log(a) - u[i] if a > 0 else -np.inf
        else:
            out[i] = 0.0


@njit(cache=True, nogil=True)
def _predictor(XT, off, v, u):
    for i in range(u.shape[0]):
        u[i] = off[i]
    for p in range(v.shape[0]):
        vp = v[p]
        if vp != 0.0:
            row = XT[p]
            for i in range(u.shape[0]):
                u[i] += vp * row[i]


@njit(cache=True, nogil=True)
def _l1(v, n_unpen, lam_b):
    s = 0.0
    for p in range(n_unpen, v.shape[0]):
        if v[p] != 0.0:
            s += abs(v[p])
    return lam_b * s if s > 0 else 0.0


@njit(cache=True, nogil=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True, nogil=True)
def _kkt_violation(G, v, n_unpen, lam_b):
    worst = 0.0
    for p in range(G.shape[0]):
        if p < n_unpen:
            e = abs(G[p])
        elif v[p] > 0:
            e = abs(G[p] - lam_b)
        elif v[p] < 0:
            e = abs(G[p] + lam_b)
        else:
            e = abs(G[p]) - lam_b
        if e > worst:
            worst = e
    return worst


@njit(cache=True, nogil=True)
def _gram(XT, h, idx, k, H):
    n = XT.shape[1]
    for a in range(k):
        ra = XT[idx[a]]
        for b in range(a, k):
            rb = XT[idx[b]]
            s = 0.0
            for i in range(n):
                s += h[i] * ra[i] * rb[i]
            H[a, b] = s
            H[b, a] = s


@njit(cache=True, nogil=True)
def _chol_solve(A, r, b, x):
    """Solve the leading ``r x r`` block of SPD ``A`` (ridged) against ``b`` into ``x``."""
    L = np.zeros((r, r))
    ridge = 0.0
    for j in range(r):
        ridge = max(ridge, A[j, j])
    ridge = 1e-12 * ridge + 1e-300
    for j in range(r):
        s = A[j, j] + ridge
        for m in range(j):
            s -= L[j, m] * L[j, m]
        L[j, j] = math.sqrt(s) if s > 0 else math.sqrt(ridge)
        for i in range(j + 1, r):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    y = np.empty(r)
    for i in range(r):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * y[m]
        y[i] = s / L[i, i]
    for i in range(r - 1, -1, -1):
        s = y[i]
        for m in range(i + 1, r):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]


@njit(cache=True, nogil=True)
def _polish(H, G, v, d, Hd, idx, k, n_unpen, lam_b, Hs, bs, xs, sel):
    """Solve the quadratic model exactly on the current support and signs.

    Coordinate descent crawls when the radial columns are nearly collinear; once
    it has found the right support, one small Cholesky solve finishes the job.
    The solution is kept only if it is optimal for the model on the whole
    active set: no sign flips, and zero coordinates within their thresholds.
    """
    m = 0
    for a in range(k):
        p = idx[a]
        if a < n_unpen or v[p] + d[p] != 0.0:
            sel[m] = a
            m += 1
    for i in range(m):
        a = sel[i]
        p = idx[a]
        sg = 0.0
        if a >= n_unpen:
            sg = 1.0 if v[p] + d[p] > 0 else -1.0
        bs[i] = G[p] - lam_b * sg
        for j in range(m):
            Hs[i, j] = H[a, sel[j]]
    _chol_solve(Hs, m, bs, xs)
    for i in range(m):
        a = sel[i]
        if a >= n_unpen:
            p = idx[a]
            old = v[p] + d[p]
            new = v[p] + xs[i]
            if new == 0.0 or (new > 0) != (old > 0):
                return False
    # model gradient at the candidate, for the coordinates left at zero
    for a in range(k):
        s = 0.0
        for i in range(m):
            s += H[a, sel[i]] * xs[i]
        xs_a = s
        p = idx[a]
        is_sel = a < n_unpen or v[p] + d[p] != 0.0
        if not is_sel and abs(G[p] - xs_a) > lam_b * (1.0 + 1e-9):
            return False
    for a in range(k):
        p = idx[a]
        if not (a < n_unpen or v[p] + d[p] != 0.0):
            d[p] = -v[p]
    for i in range(m):
        d[idx[sel[i]]] = xs[i]
    for a in range(k):
        s = 0.0
        for b in range(k):
            s += H[a, b] * d[idx[b]]
        Hd[a] = s
    return True


@njit(cache=True, nogil=True)
def _qp_value(H, b, k, n_unpen, lam, x):
    f = 0.0
    for a in range(k):
        s = 0.0
        for c in range(k):
            s += H[a, c] * x[c]
        f += x[a] * (0.5 * s - b[a])
        if a >= n_unpen:
            f += lam * abs(x[a])
    return f


@njit(cache=True, nogil=True)
def _lasso_qp(H, b, k, n_unpen, lam, x, Hs, bs, xs, sel, max_iter):
    """Minimize ``x'Hx/2 - b'x + lam * sum_{a >= n_unpen} |x_a|`` by feature-sign search.

    ``x`` holds the start and receives the solution.  Each step solves the
    smooth problem on the current support with fixed signs, then moves along
    the segment towards it, stopping at the best point where a coordinate
    crosses zero.  Returns False when the search stalls.
    """
    sgn = np.zeros(k)
    trial = np.empty(k)
    grad = np.empty(k)
    full_step = False
    for a in range(n_unpen, k):
        if x[a] > 0:
            sgn[a] = 1.0
        elif x[a] < 0:
            sgn[a] = -1.0
    for _ in range(max_iter):
        for a in range(k):
            s = -b[a]
            for c in range(k):
                s += H[a, c] * x[c]
            grad[a] = s
        if full_step:
            # support is optimal; look for a zero coordinate that wants in
            worst = lam * (1.0 + 1e-12)
            add = -1
            for a in range(n_unpen, k):
                if sgn[a] == 0.0 and abs(grad[a]) > worst:
                    worst = abs(grad[a])
                    add = a
            if add < 0:
                return True
            sgn[add] = -1.0 if grad[add] > 0 else 1.0
        m = 0
        for a in range(k):
            if a < n_unpen or sgn[a] != 0.0:
                sel[m] = a
                m += 1
        for i in range(m):
            a = sel[i]
            bs[i] = b[a] - lam * sgn[a]
            for j in range(m):
                Hs[i, j] = H[a, sel[j]]
        _chol_solve(Hs, m, bs, xs)
        f0 = _qp_value(H, b, k, n_unpen, lam, x)
        # candidate step lengths: the full step and every sign crossing before it
        best_t = 1.0
        for i in range(m):
            trial[sel[i]] = xs[i]
        for a in range(k):
            if not (a < n_unpen or sgn[a] != 0.0):
                trial[a] = 0.0
        best_f = _qp_value(H, b, k, n_unpen, lam, trial)
        for i in range(m):
            a = sel[i]
            if a >= n_unpen and x[a] != 0.0 and xs[i] * x[a] < 0:
                t = x[a] / (x[a] - xs[i])
                for j in range(m):
                    c = sel[j]
                    trial[c] = x[c] + t * (xs[j] - x[c])
                trial[a] = 0.0
                f = _qp_value(H, b, k, n_unpen, lam, trial)
                if f < best_f:
                    best_f = f
                    best_t = t
        if not best_f <= f0 + 1e-12 * max(1.0, abs(f0)):
            return False
        full_step = best_t == 1.0
        for j in range(m):
            c = sel[j]
            x[c] = xs[j] if full_step else x[c] + best_t * (xs[j] - x[c])
        for a in range(n_unpen, k):
            if not full_step and sgn[a] != 0.0 and x[a] * sgn[a] <= 0.0:
                x[a] = 0.0
            if x[a] == 0.0:
                sgn[a] = 0.0
            elif x[a] * sgn[a] < 0.0:
                # the full step flipped a coordinate: not stationary for these signs
                sgn[a] = -sgn[a]
                full_step = False
    return False


@njit(cache=True, nogil=True)
def solve(XT, off, z, n_unpen, lam_b, lam_e, nonneg, v, tol, kkt_tol, max_outer, max_sweeps):
    """Maximize the profiled penalized log-likelihood starting from ``v`` (updated in place).

    Returns ``(objective, outer_iterations, sweeps, converged, kkt_violation)``.
    """
    P, N = XT.shape
    u = np.empty(N)
    g = np.empty(N)
    h = np.empty(N)
    G = np.empty(P)
    _predictor(XT, off, v, u)
    F = profile_terms(z, u, lam_e, nonneg, g, h) - _l1(v, n_unpen, lam_b)
    active = np.zeros(P, dtype=np.bool_)
    idx = np.empty(P, dtype=np.int64)
    H = np.empty((P, P))
    d = np.zeros(P)
    Hd = np.zeros(P)
    q = np.empty(N)
    vn = np.empty(P)
    un = np.empty(N)
    rhs = np.empty(P)
    dU = np.empty(P)
    Hs = np.empty((P, P))
    bs = np.empty(P)
    xs = np.empty(P)
    sel = np.empty(P, dtype=np.int64)
    xq = np.empty(P)
    bq = np.empty(P)
    sweeps = 0
    converged = False
    viol = np.inf
    dF = np.inf
    it = 0
    for it in range(max_outer + 1):
        for p in range(P):
            s = 0.0
            row = XT[p]
            for i in range(N):
                s += row[i] * g[i]
            G[p] = s
        viol = _kkt_violation(G, v, n_unpen, lam_b)
        if viol <= kkt_tol and (it == 0 or abs(dF) <= tol * max(1.0, abs(F))):
            converged = True
            break
        if it == max_outer or sweeps >= max_sweeps:
            break

        # Newton direction: coordinate descent on the local quadratic model
        for p in range(P):
            active[p] = p < n_unpen or v[p] != 0.0
            d[p] = 0.0
        while True:
            k = 0
            for p in range(P):
                if active[p]:
                    idx[k] = p
                    k += 1
            _gram(XT, h, idx, k, H)
            for a in range(k):
                s = 0.0
                for b in range(k):
                    s += H[a, b] * d[idx[b]]
                Hd[a] = s
            for a in range(k):
                xq[a] = v[idx[a]] + d[idx[a]]
            for a in range(k):
                s = G[idx[a]] - Hd[a]
                for b in range(k):
                    s += H[a, b] * xq[b]
                bq[a] = s
            sweeps += 1
            exact = _lasso_qp(H, bq, k, n_unpen, lam_b, xq, Hs, bs, xs, sel, 20 * k + 20)
            if exact:
                for a in range(k):
                    d[idx[a]] = xq[a] - v[idx[a]]
            # inexact Newton: resolve the model gradient a little below the current violation
            thresh = max(0.1 * kkt_tol, 0.01 * viol)
            local = 0
            while not exact and sweeps < max_sweeps and local < SWEEPS_PER_STEP:
                sweeps += 1
                local += 1
                biggest = 0.0
                if n_unpen > 0:
                    for a in range(n_unpen):
                        rhs[a] = G[idx[a]] - Hd[a]
                        for b in range(n_unpen):
                            rhs[a] += H[a, b] * d[idx[b]]
                    _chol_solve(H, n_unpen, rhs, dU)
                    for a in range(n_unpen):
                        delta = dU[a] - d[idx[a]]
                        if delta != 0.0:
                            d[idx[a]] = dU[a]
                            for b in range(k):
                                Hd[b] += H[b, a] * delta
                            biggest = max(biggest, abs(H[a, a] * delta))
                for a in range(n_unpen, k):
                    p = idx[a]
                    hpp = H[a, a]
                    if hpp <= 0.0:
                        continue
                    kp = G[p] - Hd[a] + hpp * d[p]
                    new = _soft(hpp * v[p] + kp, lam_b) / hpp
                    delta = (new - v[p]) - d[p]
                    if delta != 0.0:
                        d[p] += delta
                        for b in range(k):
                            Hd[b] += H[b, a] * delta
                        biggest = max(biggest, abs(hpp * delta))
                if biggest <= thresh:
                    break
                if local % POLISH_EVERY == 0 and _polish(H, G, v, d, Hd, idx, k, n_unpen, lam_b,
                                                        Hs, bs, xs, sel):
                    break
            # coordinates outside the active set that the quadratic model wants to move
            for i in range(N):
                q[i] = 0.0
            for a in range(k):
                p = idx[a]
                if d[p] != 0.0:
                    row = XT[p]
                    for i in range(N):
                        q[i] += d[p] * row[i]
            for i in range(N):
                q[i] *= h[i]
            added = False
            for p in range(n_unpen, P):
                if not active[p]:
                    s = 0.0
                    row = XT[p]
                    for i in range(N):
                        s += row[i] * q[i]
                    if abs(G[p] - s) > lam_b * (1.0 + 1e-12):
                        active[p] = True
                        added = True
            if not added or sweeps >= max_sweeps:
                break

        # backtracking line search on the true objective
        t = 1.0
        accepted = False
        Fn = F
        for _ in range(60):
            for p in range(P):
                vn[p] = v[p] + t * d[p]
            _predictor(XT, off, vn, un)
            Fn = profile_value(z, un, lam_e, nonneg) - _l1(vn, n_unpen, lam_b)
            if Fn >= F - ASCENT_SLACK * max(1.0, abs(F)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        step = 0.0
        for p in range(P):
            step = max(step, abs(vn[p] - v[p]))
            v[p] = vn[p]
        dF = Fn - F
        F = profile_terms(z, un, lam_e, nonneg, g, h) - _l1(v, n_unpen, lam_b)
        for i in range(N):
            u[i] = un[i]
        if step == 0.0:
            # stalled at floating-point resolution
            for p in range(P):
                s = 0.0
                row = XT[p]
                for i in range(N):
                    s += row[i] * g[i]
                G[p] = s
            viol = _kkt_violation(G, v, n_unpen, lam_b)
            converged = viol <= max(kkt_tol, 1e-6)
            break
    return F, it, sweeps, converged, viol


@njit(cache=True, nogil=True)
def deviance(z, logm):
    """Poisson deviance of collapsed counts against log means."""
    dev = 0.0
    for i in range(z.shape[0]):
        m = math.exp(logm[i])
        if z[i] > 0:
            dev += z[i] * (math.log(z[i]) - logm[i]) - (z[i] - m)
        else:
            dev += m
    return 2.0 * dev


@njit(cache=True, nogil=True)
def fit_path(XT, off, z, n_unpen, rho, gammas, nonneg, v_start, tol, kkt_tol, max_outer,
             max_sweeps, T, Xraw, log_s, c, lfact, log_nc, logC, lsat, patience):
    """Warm-started fits along ``gammas`` for one ``rho``, each scored by the null-model MDL.

    With ``patience > 0`` the path stops early once that many consecutive points
    carry a parameter cost that, even with the saturated log-likelihood ``lsat``,
    exceeds the best score seen so far.  ``patience == 0`` walks the whole path.

    Returns per-point arrays ``(mdl, l0_beta, l0_eta, converged, loglik)`` (NaN
    where not evaluated) and the best point ``(index, v, eta, beta_raw)``.
    """
    P, N = XT.shape
    K = gammas.shape[0]
    mdl = np.full(K, np.nan)
    loglik = np.full(K, np.nan)
    l0b = np.full(K, -1, dtype=np.int64)
    l0e = np.full(K, -1, dtype=np.int64)
    conv = np.zeros(K, dtype=np.bool_)
    v = v_start.copy()
    u = np.empty(N)
    eta = np.empty(N)
    best = -1
    best_mdl = np.inf
    best_v = v.copy()
    best_eta = np.zeros(N)
    best_beta = np.zeros(T.shape[0])
    hopeless = 0
    for k in range(K):
        lam_b = gammas[k] * rho
        lam_e = gammas[k] * (1.0 - rho)
        _, _, _, ok, _ = solve(XT, off, z, n_unpen, lam_b, lam_e, nonneg, v, tol, kkt_tol,
                               max_outer, max_sweeps)
        _predictor(XT, off, v, u)
        line_coefficients(z, u, lam_e, nonneg, eta)
        beta = T @ v
        nb = 0
        for p in range(beta.shape[0]):
            if beta[p] != 0.0:
                nb += 1
        ne = 0
        for i in range(N):
            if eta[i] != 0.0:
                ne += 1
        ll = 0.0
        for i in range(N):
            lin = log_s[i] + eta[i]
            for p in range(beta.shape[0]):
                lin += Xraw[i, p] * beta[p]
            ll += z[i] * lin - c * math.exp(lin)
        ll -= lfact
        score = -ll + 0.5 * (nb + ne) * log_nc + logC[ne]
        mdl[k] = score
        loglik[k] = ll
        l0b[k] = nb
        l0e[k] = ne
        conv[k] = ok
        if score < best_mdl:
            best_mdl = score
            best = k
            best_v[:] = v
            best_eta[:] = eta
            best_beta[:] = beta
        if patience > 0 and -lsat + 0.5 * (nb + ne) * log_nc + logC[ne] > best_mdl:
            hopeless += 1
            if hopeless >= patience:
                break
        else:
            hopeless = 0
    return mdl, l0b, l0e, conv, loglik, best, best_v, best_eta, best_beta
