"""Compiled inner loop of the table-allocation update.

Random variates are drawn beforehand from the caller's numpy Generator so the
kernel is a pure function of its inputs and chains stay reproducible per seed.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _nlogpdf(y, mu, var):
    d = y - mu
    return -0.5 * (LOG_2PI + math.log(var)) - 0.5 * d * d / var


@njit(cache=True)
def seat_group_kernel(
    y, s, lp0, lp00, u, g0, z0, g00, z00, reseat,
    tn, ts1, ts2, th, tt, tmu, tvar, k,
    psi_mu, psi_var, P,
    sm, smu, svar, H,
    log_alpha, log_kappa, log_1mk, log_gamma, gamma,
    nig0, nig00,
):
    """Sequentially (re)seat every customer of one group.

    ``nig0`` / ``nig00`` hold ``(mu0, k0, shape, rate)`` of the two base measures.
    Arrays must have spare capacity for ``y.size`` new tables and atoms.
    Returns the new sizes ``(k, P, H)``.
    """
    n_obs = y.size
    msum = 0.0
    for q in range(H):
        msum += sm[q]
    logw = np.empty(k + H + 2 + 2 * n_obs)
    for j in range(n_obs):
        yj = y[j]
        if reseat:
            slot = s[j]
            tn[slot] -= 1
            ts1[slot] -= yj
            ts2[slot] -= yj * yj
            if tn[slot] == 0:
                ts1[slot] = 0.0
                ts2[slot] = 0.0
                if th[slot] == 0:
                    sm[tt[slot]] -= 1
                    msum -= 1.0
        log_den = math.log(msum + gamma)
        top = -np.inf
        for ell in range(k):
            if tn[ell] > 0:
                w = math.log(tn[ell]) + _nlogpdf(yj, tmu[ell], tvar[ell])
            else:
                w = -np.inf
            logw[ell] = w
            if w > top:
                top = w
        w = log_alpha + log_kappa + lp0[j]
        logw[k] = w
        if w > top:
            top = w
        base = log_alpha + log_1mk - log_den
        for q in range(H):
            if sm[q] > 0:
                w = base + math.log(sm[q]) + _nlogpdf(yj, smu[q], svar[q])
            else:
                w = -np.inf
            logw[k + 1 + q] = w
            if w > top:
                top = w
        w = base + log_gamma + lp00[j]
        logw[k + 1 + H] = w
        if w > top:
            top = w
        total = 0.0
        n_w = k + H + 2
        for q in range(n_w):
            e = math.exp(logw[q] - top)
            logw[q] = e
            total += e
        target = u[j] * total
        acc = 0.0
        idx = n_w - 1
        for q in range(n_w):
            acc += logw[q]
            if target < acc and logw[q] > 0.0:
                idx = q
                break
        if idx < k:
            slot = idx
        elif idx == k:
            mu0, k0, a0, b0 = nig0
            kn = k0 + 1.0
            d = yj - mu0
            bn = b0 + 0.5 * k0 * d * d / kn
            var = bn / g0[j]
            mu = (k0 * mu0 + yj) / kn + math.sqrt(var / kn) * z0[j]
            psi_mu[P] = mu
            psi_var[P] = var
            slot = k
            th[slot] = 1
            tt[slot] = P
            tmu[slot] = mu
            tvar[slot] = var
            tn[slot] = 0
            ts1[slot] = 0.0
            ts2[slot] = 0.0
            P += 1
            k += 1
        else:
            q = idx - k - 1
            if q == H:
                mu0, k0, a0, b0 = nig00
                kn = k0 + 1.0
                d = yj - mu0
                bn = b0 + 0.5 * k0 * d * d / kn
                var = bn / g00[j]
                smu[H] = (k0 * mu0 + yj) / kn + math.sqrt(var / kn) * z00[j]
                svar[H] = var
                sm[H] = 0
                H += 1
            sm[q] += 1
            msum += 1.0
            slot = k
            th[slot] = 0
            tt[slot] = q
            tmu[slot] = smu[q]
            tvar[slot] = svar[q]
            tn[slot] = 0
            ts1[slot] = 0.0
            ts2[slot] = 0.0
            k += 1
        tn[slot] += 1
        ts1[slot] += yj
        ts2[slot] += yj * yj
        s[j] = slot
    return k, P, H
