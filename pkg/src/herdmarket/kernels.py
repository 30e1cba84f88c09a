"""Compiled event loops for the two shipped market models.

These kernels replay exactly the draw protocol of the generic engine: one
exponential per waiting time, one uniform per action scanned against the
sequential cumulative action masses, one signal draw per trade, one uniform
per transition destination.  Callers pre-draw each stream as a flat array
from the same seeded substreams the engine uses, so a kernel trajectory is
draw-for-draw identical to the generic one.

All floating-point expressions mirror the engine/behavior code operation by
operation (same grouping, same math.exp) to keep results bit-identical.
"""

import math

import numpy as np
from numba import njit

PRICE_GUARD = 1e12


@njit(cache=True)
def pure_chain(c0, c1, t, n, beta, gamma, horizon, exps, acts, dests, times, copt):
    """Two-state transition-only chain; every event consumes one draw of each
    stream.  Returns (events_done, t, c0, c1, horizon_reached)."""
    ninv = float(n) ** (-1.0)
    k = 0
    done = 0
    for i in range(exps.shape[0]):
        m0 = float(c0)
        m1 = float(c1)
        nu = m0 + m1
        tau = exps[i] / nu
        tn = t + tau
        if tn > horizon:
            done = 1
            break
        if tn <= t:
            tn = np.nextafter(t, np.inf)
        t = tn
        u = acts[i] * nu
        state = 0 if u < m0 else 1
        v0 = c0 * ninv
        v1 = c1 * ninv
        mbar = v1 - v0
        u2 = dests[i]
        if state == 0:
            p = beta * math.exp(gamma * mbar)
            dest = 0 if u2 < 1.0 - p else 1
        else:
            p = beta * math.exp(-gamma * mbar)
            dest = 0 if u2 < p else 1
        if dest != state:
            if state == 0:
                c0 -= 1
                c1 += 1
            else:
                c1 -= 1
                c0 += 1
        times[k] = t
        copt[k] = c1
        k += 1
    return k, t, c0, c1, done


@njit(cache=True)
def pure_occupation(c0, c1, t, n, beta, gamma, skip, k_done, exps, acts, dests, occ):
    """Event-count-driven variant accumulating time-weighted occupation of the
    optimist count; events with global index < skip are burn-in."""
    ninv = float(n) ** (-1.0)
    for i in range(exps.shape[0]):
        m0 = float(c0)
        m1 = float(c1)
        nu = m0 + m1
        tau = exps[i] / nu
        if k_done + i >= skip:
            occ[c1] += tau
        t = t + tau
        u = acts[i] * nu
        state = 0 if u < m0 else 1
        v0 = c0 * ninv
        v1 = c1 * ninv
        mbar = v1 - v0
        u2 = dests[i]
        if state == 0:
            p = beta * math.exp(gamma * mbar)
            dest = 0 if u2 < 1.0 - p else 1
        else:
            p = beta * math.exp(-gamma * mbar)
            dest = 0 if u2 < p else 1
        if dest != state:
            if state == 0:
                c0 -= 1
                c1 += 1
            else:
                c1 -= 1
                c0 += 1
    return c0, c1, t, k_done + exps.shape[0]


@njit(cache=True)
def extended_chain(
    c0,
    c1,
    c2,
    t,
    price,
    n,
    beta,
    gamma1,
    gamma2,
    lam,
    phi,
    w1,
    kappa,
    F,
    impact,
    rootninv,
    horizon,
    exps,
    acts,
    sigs,
    dests,
    times,
    prices,
    cpess,
    copt,
    kinds,
):
    """Three-state chain with trades; states: 0 pessimist, 1 optimist,
    2 fundamentalist (never changes type).

    Returns (events, t, price, c0, c1, horizon_reached, clamped, diverged).
    """
    ninv = float(n) ** (-1.0)
    one_m_phi = 1.0 - phi
    k = 0
    s = 0
    d = 0
    done = 0
    clamped = 0
    err = 0
    for i in range(exps.shape[0]):
        cumA = float(c0) * lam
        cumB = cumA + float(c1) * lam
        cumC = cumB + float(c2) * lam
        cumD = cumC + float(c0)
        cumE = cumD + float(c1)
        nu = cumE + float(c2)
        tau = exps[i] / nu
        tn = t + tau
        if tn > horizon:
            done = 1
            break
        if tn <= t:
            tn = np.nextafter(t, np.inf)
        t = tn
        u = acts[i] * nu
        if u < cumA:
            kind = 0
            st = 0
        elif u < cumB:
            kind = 0
            st = 1
        elif u < cumC:
            kind = 0
            st = 2
        elif u < cumD:
            kind = 1
            st = 0
        elif u < cumE:
            kind = 1
            st = 1
        else:
            kind = 1
            st = 2
        if kind == 0:
            xi = sigs[s]
            s += 1
            if st == 0:
                q = -1.0 * w1 * rootninv + xi
            elif st == 1:
                q = 1.0 * w1 * rootninv + xi
            else:
                w2v = kappa * (F - price)
                q = w2v * rootninv + xi
            price = price + impact * q
            if not np.isfinite(price) or abs(price) > PRICE_GUARD:
                err = 1
                break
        else:
            u2 = dests[d]
            d += 1
            if st != 2:
                v0 = c0 * ninv
                v1 = c1 * ninv
                mbar = (v1 - v0) / one_m_phi
                w2v = kappa * (F - price)
                zhat = lam * (phi * w2v + one_m_phi * w1 * mbar)
                a = gamma1 * zhat + gamma2 * mbar
                p = beta * math.exp(a) if st == 0 else beta * math.exp(-a)
                if p > 1.0:
                    clamped += 1
                    dest = 1 - st
                elif st == 0:
                    dest = 0 if u2 < 1.0 - p else 1
                else:
                    dest = 0 if u2 < p else 1
                if dest != st:
                    if st == 0:
                        c0 -= 1
                        c1 += 1
                    else:
                        c1 -= 1
                        c0 += 1
        times[k] = t
        prices[k] = price
        cpess[k] = c0
        copt[k] = c1
        kinds[k] = kind
        k += 1
    return k, t, price, c0, c1, done, clamped, err


@njit(cache=True)
def extended_sde_em(
    x,
    v,
    dt,
    nsteps,
    alpha,
    beta,
    gamma1,
    gamma2,
    lam,
    phi,
    w1,
    kappa,
    F,
    price_diff,
    normals,
    thin,
    xs,
    vs,
):
    """Euler steps of the reduced price/opinion diffusion; records every
    ``thin`` steps into xs/vs (slot 0 holds the initial point)."""
    sqdt = math.sqrt(dt)
    xs[0] = x
    vs[0] = v
    j = 1
    err = 0
    for i in range(nsteps):
        z = lam * (phi * (kappa * (F - x)) + (1.0 - phi) * w1 * v)
        a = gamma1 * z + gamma2 * v
        x = x + alpha * z * dt + price_diff * sqdt * normals[i]
        v = v + 2.0 * beta * (math.tanh(a) - v) * math.cosh(a) * dt
        if not (np.isfinite(x) and np.isfinite(v)) or abs(x) > PRICE_GUARD:
            err = 1
            break
        if (i + 1) % thin == 0:
            xs[j] = x
            vs[j] = v
            j += 1
    return j, err
