"""Compiled coordinate-descent kernels.

Everything here is numerical plumbing shared by the threshold operator and
the solver; the public contracts live in threshold.py and solver.py.  The
kernels fall back to plain Python when numba is unavailable (slow but
identical arithmetic).
"""

import math

import numpy as np

try:
    from numba import njit

    NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


@njit(cache=True)
def _mcp(b, lam, gamma):
    ab = abs(b)
    knee = lam * gamma
    if ab <= knee:
        return ab - ab * ab / (2.0 * knee)
    return 0.5 * knee


@njit(cache=True)
def _thresh(z, lam_hi, lam_lo, gamma, d_hi, d_lo):
    # Four-segment operator on |z| with the sign restored afterwards.
    # Interval bounds are evaluated before membership so a degenerate
    # ordering (empty middle segment) cannot misroute z.
    az = abs(z)
    sgn = 1.0 if z >= 0.0 else -1.0
    t1 = lam_hi * gamma
    if az >= t1:
        return z
    c2 = lam_lo * gamma + d_hi * (1.0 - lam_lo / lam_hi)
    if az >= c2:
        return sgn * (az - d_hi) / (1.0 - d_hi / t1)
    c3 = d_hi + d_lo
    if az >= c3:
        return sgn * (az - c3) / (1.0 - d_hi / t1 - d_lo / (lam_lo * gamma))
    return 0.0


@njit(cache=True)
def cd_cycle(
    X,
    r,
    beta,
    order,
    sib_of,
    cou_of,
    norms_s,
    norms_c,
    slopes_s,
    slopes_c,
    lam_s,
    lam_c,
    gamma,
    tau,
    s_is_hi,
    l1_pen,
    record,
    obj_out,
):
    """One cycle over ``order``; returns the largest coefficient change.

    Residual, group norms and slopes are updated in place after every
    coordinate move; slopes use the multiplicative exponential update.
    Columns with a negative sibling id are plain l1 extras and take a
    soft-threshold step with penalty ``l1_pen`` instead.  With ``record``
    set, obj_out[t] receives Q after the t-th update (penalty part from
    the running norms, residual part recomputed).
    """
    n = X.shape[0]
    max_change = 0.0
    for t in range(order.size):
        j = order[t]
        b0 = beta[j]
        z = 0.0
        for i in range(n):
            z += X[i, j] * r[i]
        z = z / n + b0
        sg = sib_of[j]
        if sg >= 0:
            cg = cou_of[j]
            ds = slopes_s[sg]
            dc = slopes_c[cg]
            if s_is_hi:
                bnew = _thresh(z, lam_s, lam_c, gamma, ds, dc)
            else:
                bnew = _thresh(z, lam_c, lam_s, gamma, dc, ds)
        else:
            az = abs(z) - l1_pen
            bnew = 0.0 if az <= 0.0 else (az if z > 0.0 else -az)
        if bnew != b0:
            diff = b0 - bnew
            for i in range(n):
                r[i] += X[i, j] * diff
            beta[j] = bnew
            if sg >= 0:
                dgs = _mcp(bnew, lam_s, gamma) - _mcp(b0, lam_s, gamma)
                dgc = _mcp(bnew, lam_c, gamma) - _mcp(b0, lam_c, gamma)
                norms_s[sg] += dgs
                norms_c[cg] += dgc
                slopes_s[sg] *= math.exp(-tau / lam_s * dgs)
                slopes_c[cg] *= math.exp(-tau / lam_c * dgc)
            ch = abs(bnew - b0)
            if ch > max_change:
                max_change = ch
        if record:
            rss = 0.0
            for i in range(n):
                rss += r[i] * r[i]
            pen = 0.0
            for g in range(norms_s.size):
                pen += (lam_s * lam_s / tau) * (1.0 - math.exp(-tau * norms_s[g] / lam_s))
                pen += (lam_c * lam_c / tau) * (1.0 - math.exp(-tau * norms_c[g] / lam_c))
            if l1_pen > 0.0:
                for jj in range(beta.size):
                    if sib_of[jj] < 0:
                        pen += l1_pen * abs(beta[jj])
            obj_out[t] = 0.5 * rss / n + pen
    return max_change


@njit(cache=True)
def recompute_groups(beta, p_design, sib_of, cou_of, lam_s, lam_c, gamma, tau,
                     norms_s, norms_c, slopes_s, slopes_c):
    """Rebuild group norms and slopes from beta (bounds incremental drift)."""
    for g in range(norms_s.size):
        norms_s[g] = 0.0
        norms_c[g] = 0.0
    for j in range(p_design):
        b = beta[j]
        if b != 0.0:
            norms_s[sib_of[j]] += _mcp(b, lam_s, gamma)
            norms_c[cou_of[j]] += _mcp(b, lam_c, gamma)
    for g in range(norms_s.size):
        slopes_s[g] = lam_s * math.exp(-tau * norms_s[g] / lam_s)
        slopes_c[g] = lam_c * math.exp(-tau * norms_c[g] / lam_c)


@njit(cache=True)
def cd_cycles(
    X, r, beta, order, p_design, sib_of, cou_of, norms_s, norms_c,
    slopes_s, slopes_c, lam_s, lam_c, gamma, tau, s_is_hi, l1_pen,
    tol, max_cycles,
):
    """Repeat cycles over ``order`` until the largest move drops below tol.

    Groups are recomputed from scratch after every cycle.  Returns
    (cycles_run, last_max_change).
    """
    dummy = np.zeros(0)
    cycles = 0
    change = np.inf
    while cycles < max_cycles:
        change = cd_cycle(X, r, beta, order, sib_of, cou_of, norms_s, norms_c,
                          slopes_s, slopes_c, lam_s, lam_c, gamma, tau, s_is_hi,
                          l1_pen, False, dummy)
        recompute_groups(beta, p_design, sib_of, cou_of, lam_s, lam_c, gamma, tau,
                         norms_s, norms_c, slopes_s, slopes_c)
        cycles += 1
        if change < tol:
            break
    return cycles, change


@njit(cache=True)
def timed_cycles(X, r, beta, order, sib_of, cou_of, norms_s, norms_c,
                 slopes_s, slopes_c, lam_s, lam_c, gamma, tau, s_is_hi, k):
    """Run k plain cycles back to back (complexity measurements)."""
    dummy = np.zeros(0)
    for _ in range(k):
        cd_cycle(X, r, beta, order, sib_of, cou_of, norms_s, norms_c,
                 slopes_s, slopes_c, lam_s, lam_c, gamma, tau, s_is_hi,
                 0.0, False, dummy)
