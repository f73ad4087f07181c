"""Hot EM / conditional-maximisation kernels.

Everything here works on *rotated* pair coordinates ``s = (y1 + y2)/sqrt(2)``
and ``t = (y1 - y2)/sqrt(2)``. For an equal-variance bivariate normal the two
are independent with variances ``sigma2*(1 + rho)`` and ``sigma2*(1 - rho)``,
and swapping a pair only flips the sign of ``t``. The swap mixture therefore
factorises into a Gaussian part in ``s`` and a symmetric two-component
mixture in ``t`` with component means ``+theta`` / ``-theta`` where
``theta = (mu1 - mu2)/sqrt(2)``. Only the ``t`` values of DZ pairs have to be
touched per EM iteration; all other quantities are fixed sufficient
statistics.

The functions are written so that the same source is valid numba and valid
numpy (see :mod:`twinmix._accel`).
"""

import math

import numpy as np

from ._accel import jit

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)
RHO_EPS = 1e-6
SIGMA2_MIN = 1e-10


@jit
def rho_objective(n, A, C, sigma2, rho):
    """Bivariate-normal log-likelihood terms that depend on ``rho`` given ``sigma2``."""
    om = 1.0 - rho * rho
    return -0.5 * n * math.log(om) - (A - 2.0 * rho * C) / (2.0 * sigma2 * om)


@jit
def rho_score(n, A, C, sigma2, rho):
    # d/drho of rho_objective, times sigma2*(1 - rho^2)^2 > 0
    return n * sigma2 * rho * (1.0 - rho * rho) + C * (1.0 + rho * rho) - rho * A


@jit
def _score_slope(n, A, C, sigma2, rho):
    return n * sigma2 * (1.0 - 3.0 * rho * rho) + 2.0 * C * rho - A


@jit
def _descending_root(n, A, C, sigma2, lo, hi):
    # requires score(lo) > 0 >= score(hi) with the score monotone on [lo, hi]
    x = 0.5 * (lo + hi)
    for _ in range(200):
        g = rho_score(n, A, C, sigma2, x)
        if g > 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 1e-15:
            break
        dg = _score_slope(n, A, C, sigma2, x)
        nxt = 0.5 * (lo + hi)
        if dg < 0.0:
            cand = x - g / dg
            if lo < cand < hi:
                nxt = cand
        if abs(nxt - x) <= 1e-16:
            x = nxt
            break
        x = nxt
    return x


@jit
def rho_update(n, A, C, sigma2):
    """Global maximiser over ``|rho| <= 1 - RHO_EPS`` of :func:`rho_objective`.

    The stationarity condition is a cubic, so up to two interior maxima can
    exist. The score is split into monotone pieces at its turning points and
    every descending root is polished by safeguarded Newton; the best one wins.
    """
    lim = 1.0 - RHO_EPS
    if n <= 0:
        return 0.0
    pts = np.empty(4)
    npts = 0
    pts[npts] = -lim
    npts += 1
    a3 = 3.0 * n * sigma2
    disc = 4.0 * C * C + 4.0 * a3 * (n * sigma2 - A)
    if disc > 0.0 and a3 > 0.0:
        sq = math.sqrt(disc)
        r1 = (2.0 * C - sq) / (2.0 * a3)
        r2 = (2.0 * C + sq) / (2.0 * a3)
        if -lim < r1 < lim:
            pts[npts] = r1
            npts += 1
        if -lim < r2 < lim:
            pts[npts] = r2
            npts += 1
    pts[npts] = lim
    npts += 1

    best = 0.0
    best_f = -np.inf
    g_lo = rho_score(n, A, C, sigma2, -lim)
    if g_lo < 0.0:
        f = rho_objective(n, A, C, sigma2, -lim)
        if f > best_f:
            best_f = f
            best = -lim
    g_hi = rho_score(n, A, C, sigma2, lim)
    if g_hi > 0.0:
        f = rho_objective(n, A, C, sigma2, lim)
        if f > best_f:
            best_f = f
            best = lim
    for i in range(npts - 1):
        p = pts[i]
        q = pts[i + 1]
        gp = rho_score(n, A, C, sigma2, p)
        gq = rho_score(n, A, C, sigma2, q)
        if gp > 0.0 and gq <= 0.0:
            r = _descending_root(n, A, C, sigma2, p, q)
            f = rho_objective(n, A, C, sigma2, r)
            if f > best_f:
                best_f = f
                best = r
    if best_f == -np.inf:
        # flat score (degenerate sums); pick the better end point
        if rho_objective(n, A, C, sigma2, lim) > rho_objective(n, A, C, sigma2, -lim):
            best = lim
        else:
            best = -lim
    return best


@jit
def _quad_form(A, C, rho):
    return (A - 2.0 * rho * C) / (1.0 - rho * rho)


@jit
def cm_variances(nM, AM, CM, nD, AD, CD, sigma2, rhoM, rhoD, max_cycles, tol):
    """Conditional maximisation over (sigma2, rho_M, rho_D) with a shared sigma2.

    Each cycle sets sigma2 to its closed form given both correlations, then
    re-solves each correlation given sigma2. Every step is a global
    conditional maximum, so the objective never decreases.
    """
    for _ in range(max_cycles):
        q = 0.0
        if nM > 0:
            q += _quad_form(AM, CM, rhoM)
        if nD > 0:
            q += _quad_form(AD, CD, rhoD)
        s2 = q / (2.0 * (nM + nD))
        if s2 < SIGMA2_MIN:
            s2 = SIGMA2_MIN
        rM = rho_update(nM, AM, CM, s2) if nM > 0 else rhoM
        rD = rho_update(nD, AD, CD, s2) if nD > 0 else rhoD
        d = max(abs(s2 - sigma2) / sigma2, abs(rM - rhoM), abs(rD - rhoD))
        sigma2 = s2
        rhoM = rM
        rhoD = rD
        if d < tol:
            break
    return sigma2, rhoM, rhoD


@jit
def gauss_loglik(n, ss_s, ss_t, sigma2, rho):
    """Equal-means bivariate-normal log-likelihood from rotated sums of squares."""
    if n <= 0:
        return 0.0
    a = sigma2 * (1.0 + rho)
    b = sigma2 * (1.0 - rho)
    return -n * LOG_2PI - 0.5 * n * math.log(a * b) - ss_s / (2.0 * a) - ss_t / (2.0 * b)


@jit
def mixture_loglik(t, ss_s, theta, sigma2, rho):
    """Swap-mixture log-likelihood of the DZ stratum (weights 1/2) in rotated form."""
    n = t.shape[0]
    c = sigma2 * (1.0 + rho)
    e = sigma2 * (1.0 - rho)
    x = t * (theta / e)
    ax = np.abs(x)
    lc = np.sum(ax + np.log1p(np.exp(-2.0 * ax))) - n * LOG_2
    tt = np.sum(t * t)
    return (-n * LOG_2PI - 0.5 * n * math.log(c * e) - ss_s / (2.0 * c)
            - (tt + n * theta * theta) / (2.0 * e) + lc)


@jit
def _to_natural(p, out):
    out[0] = p[0]
    out[1] = math.exp(p[1])
    out[2] = math.tanh(p[2])
    out[3] = math.tanh(p[3])


@jit
def em_step(p, nM, ssM_s, ssM_t, t, ssD_s, tt, cm_cycles, fix_theta):
    """One EM iteration on the working vector ``(theta, log sigma2, atanh rho_M, atanh rho_D)``.

    Returns the updated vector and the objective at the *input* point. With
    ``nM == 0`` the MZ stratum is absent and the variance M-step is the exact
    single-stratum maximiser instead of conditional maximisation.
    """
    lim = 1.0 - RHO_EPS
    nD = t.shape[0]
    theta = p[0]
    sigma2 = math.exp(p[1])
    rhoM = max(-lim, min(lim, math.tanh(p[2])))
    rhoD = max(-lim, min(lim, math.tanh(p[3])))
    c = sigma2 * (1.0 + rhoD)
    e = sigma2 * (1.0 - rhoD)
    x = t * (theta / e)
    ax = np.abs(x)
    q = np.exp(-2.0 * ax)
    ll = (gauss_loglik(nM, ssM_s, ssM_t, sigma2, rhoM)
          - nD * LOG_2PI - 0.5 * nD * math.log(c * e) - ssD_s / (2.0 * c)
          - (tt + nD * theta * theta) / (2.0 * e)
          + np.sum(ax + np.log1p(q)) - nD * LOG_2)
    if fix_theta:
        th = theta
    else:
        u = np.sign(x) * (1.0 - q) / (1.0 + q)
        th = np.sum(u * t) / nD
    se = tt - nD * th * th
    if se < 0.0:
        se = 0.0
    AD = ssD_s + se
    CD = 0.5 * (ssD_s - se)
    if nM > 0:
        AM = ssM_s + ssM_t
        CM = 0.5 * (ssM_s - ssM_t)
        s2, rM, rD = cm_variances(nM, AM, CM, nD, AD, CD, sigma2, rhoM, rhoD,
                                  cm_cycles, 1e-13)
    else:
        rM = rhoM
        s2 = 0.5 * AD / nD
        rD = 2.0 * CD / AD if AD > 0.0 else 0.0
        if rD > lim or rD < -lim:
            rD = lim if rD > 0.0 else -lim
            s2 = _quad_form(AD, CD, rD) / (2.0 * nD)
        if s2 < SIGMA2_MIN:
            s2 = SIGMA2_MIN
    out = np.empty(4)
    out[0] = th
    out[1] = math.log(s2)
    out[2] = math.atanh(rM)
    out[3] = math.atanh(rD)
    return out, ll


@jit
def em_fit(nM, ssM_s, ssM_t, t, ssD_s, theta, sigma2, rhoM, rhoD,
           max_iter, tol, ptol, cm_cycles, fix_theta, accelerate):
    """Run EM from a start, optionally with SQUAREM extrapolation.

    An accelerated iteration takes two plain EM steps, extrapolates along
    them, and takes one more EM step from the extrapolated point; if that
    point scores below the first EM step the plain double step is kept
    instead, so the objective is non-decreasing across iterations.

    Convergence requires both a relative objective change ``<= tol`` and a
    natural-scale fixed-point residual ``< ptol``.

    Returns ``(theta, sigma2, rho_M, rho_D, loglik, iterations, converged, trace)``
    with ``trace[k]`` the objective at the start of iteration ``k``.
    """
    lim_z = math.atanh(1.0 - RHO_EPS)
    tt = np.sum(t * t)
    p0 = np.empty(4)
    p0[0] = theta
    p0[1] = math.log(sigma2)
    p0[2] = math.atanh(max(-1.0 + RHO_EPS, min(1.0 - RHO_EPS, rhoM)))
    p0[3] = math.atanh(max(-1.0 + RHO_EPS, min(1.0 - RHO_EPS, rhoD)))
    trace = np.empty(max_iter + 1)
    a0 = np.empty(4)
    a1 = np.empty(4)
    converged = False
    ll_prev = 0.0
    it = 0
    while it < max_iter:
        p1, ll0 = em_step(p0, nM, ssM_s, ssM_t, t, ssD_s, tt, cm_cycles, fix_theta)
        trace[it] = ll0
        _to_natural(p0, a0)
        _to_natural(p1, a1)
        resid = np.max(np.abs(a1 - a0))
        if it > 0 and abs(ll0 - ll_prev) <= tol * abs(ll0) and resid < ptol:
            p0 = p1
            converged = True
            it += 1
            break
        ll_prev = ll0
        it += 1
        if not accelerate:
            p0 = p1
            continue
        p2, ll1 = em_step(p1, nM, ssM_s, ssM_t, t, ssD_s, tt, cm_cycles, fix_theta)
        r = p1 - p0
        v = p2 - p1 - r
        rn = math.sqrt(np.sum(r * r))
        vn = math.sqrt(np.sum(v * v))
        if vn <= 0.0 or not np.isfinite(vn):
            p0 = p2
            continue
        alpha = -rn / vn
        if alpha > -1.0:
            alpha = -1.0
        pn = p0 - 2.0 * alpha * r + alpha * alpha * v
        for k in range(1, 4):
            if pn[k] > lim_z:
                pn[k] = lim_z
            elif pn[k] < -lim_z:
                pn[k] = -lim_z
        if not np.all(np.isfinite(pn)):
            p0 = p2
            continue
        p3, lln = em_step(pn, nM, ssM_s, ssM_t, t, ssD_s, tt, cm_cycles, fix_theta)
        if np.isfinite(lln) and lln >= ll1:
            p0 = p3
        else:
            p0 = p2
    _to_natural(p0, a0)
    theta = a0[0]
    sigma2 = a0[1]
    rhoM = max(-1.0 + RHO_EPS, min(1.0 - RHO_EPS, a0[2]))
    rhoD = max(-1.0 + RHO_EPS, min(1.0 - RHO_EPS, a0[3]))
    ll = gauss_loglik(nM, ssM_s, ssM_t, sigma2, rhoM) + mixture_loglik(t, ssD_s, theta, sigma2, rhoD)
    trace[it] = ll
    return theta, sigma2, rhoM, rhoD, ll, it, converged, trace[: it + 1]
