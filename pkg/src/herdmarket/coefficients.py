"""Finite-market drift/diffusion coefficients and their large-market limits.

For a market of n agents the four coefficient functions are

    z_n(x, v)      expected aggregate excess demand (scaled by n^(-d2)),
    b_n(x, v)      expected aggregate state transition per state,
    sigma_n(x, v)  expected trading volume (root of the price second moment),
    c2_n(x, v)     signed second-moment matrix of character increments.

They satisfy the single-event moment identities

    nu * E[P_1 - P_0]        = alpha * z_n(x, v),
    nu * E[M_1^i - M_0^i]    = b_n^i(x, v),
    nu * E[(M_1^i - M_0^i)^2]= c2_n^ii(x, v),

which `monte_carlo_moment_check` verifies by direct simulation.  The
off-diagonal mixed second moments are negative, so the matrix exposed is the
second moment c2 itself rather than an elementwise root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import MomentsUnavailableError

MC_MOMENT_SAMPLES = 10 ** 5


@dataclass(frozen=True)
class CoefficientSet:
    """Evaluators for (z, b, sigma, c2); n is an agent count or math.inf."""

    z: Callable
    b: Callable
    sigma: Callable
    c2: Callable
    n: float


def _demand_moments(behavior, signals, mc_samples, mc_seed, state):
    """Return callables (price, character) -> (E[e], E[e^2]) for one state."""
    if behavior.demand_mean is not None and behavior.demand_second_moment is not None:
        return behavior.demand_mean, behavior.demand_second_moment
    if signals is None:
        raise MomentsUnavailableError(
            "moments unavailable: no closed-form demand moments and no signal sampler"
        )

    def mean(price, character):
        rng = np.random.Generator(np.random.Philox(key=[mc_seed, state]))
        xi = signals.sampler(rng, mc_samples)
        return float(np.mean(behavior.excess_demand(price, character, xi, state)))

    def second(price, character):
        rng = np.random.Generator(np.random.Philox(key=[mc_seed, state]))
        xi = signals.sampler(rng, mc_samples)
        return float(np.mean(behavior.excess_demand(price, character, xi, state) ** 2))

    return mean, second


def finite_coefficients(spec, mc_samples=MC_MOMENT_SAMPLES, mc_seed=0):
    """Coefficient functions of a homogeneous-per-state ModelSpec.

    Demand moments come from the behaviors' closed forms when registered,
    otherwise from a deterministic Monte Carlo estimate over the signal law
    (relative tolerance ~ 1/sqrt(mc_samples)).
    """
    if spec.heterogeneous:
        raise ValueError("coefficients are defined for per-state homogeneous specs")
    n = spec.n
    m = spec.states.m
    d1, d2 = spec.scaling.d1, spec.scaling.d2
    nd1 = float(n) ** d1
    nd2 = float(n) ** (-d2)
    moments = [
        _demand_moments(spec.behaviors[i], spec.signals, mc_samples, mc_seed, i)
        for i in range(m)
    ]

    def rates(x, v):
        lam = np.array([b.trading_intensity(x, v) for b in spec.behaviors])
        mu = np.array([b.transition_rate(x, v) for b in spec.behaviors])
        rows = np.vstack(
            [np.asarray(spec.behaviors[i].transition_matrix(x, v), dtype=float)[i] for i in range(m)]
        )
        return lam, mu, rows - np.diag(np.diag(rows))

    def z(x, v):
        v = np.asarray(v, dtype=float)
        lam, _, _ = rates(x, v)
        means = np.array([moments[i][0](x, v) for i in range(m)])
        return nd2 * float(np.sum(nd1 * v * lam * means))

    def b(x, v):
        v = np.asarray(v, dtype=float)
        _, mu, off = rates(x, v)
        inflow = (v * mu) @ off
        outflow = v * mu * off.sum(axis=1)
        return inflow - outflow

    def sigma(x, v):
        v = np.asarray(v, dtype=float)
        lam, _, _ = rates(x, v)
        seconds = np.array([moments[i][1](x, v) for i in range(m)])
        return nd2 * math.sqrt(float(np.sum(nd1 * v * lam * seconds)))

    def c2(x, v):
        v = np.asarray(v, dtype=float)
        _, mu, off = rates(x, v)
        flow = v[:, None] * mu[:, None] * off  # flow[i, j] = v_i mu_i Pi_i[i, j]
        mat = -(flow + flow.T) / nd1
        np.fill_diagonal(mat, (flow.sum(axis=1) + flow.sum(axis=0)) / nd1)
        return mat

    return CoefficientSet(z=z, b=b, sigma=sigma, c2=c2, n=n)


def limit_coefficients(model, params):
    """Large-market limit coefficients in reduced coordinates (price, vbar).

    ``b`` returns the scalar average-opinion drift; ``c2`` is identically
    zero (the character noise vanishes in the limit).
    """
    if model == "lux-pure":
        beta, gamma = params.beta, params.gamma

        def b(x, vbar):
            a = gamma * vbar
            return 2.0 * beta * (math.tanh(a) - vbar) * math.cosh(a)

        return CoefficientSet(
            z=lambda x, vbar: 0.0,
            b=b,
            sigma=lambda x, vbar: 0.0,
            c2=lambda x, vbar: 0.0,
            n=math.inf,
        )
    if model == "lux-extended":
        beta = params.beta
        gamma1, gamma2 = params.gamma1, params.gamma2
        lam, phi, w1, F = params.lambda_bar, params.phi_n, params.w1, params.F
        w2 = params.w2_function()
        var_xi = params.signal_std ** 2

        def z(x, vbar):
            return lam * (phi * w2(F, x) + (1.0 - phi) * w1 * vbar)

        def b(x, vbar):
            a = gamma1 * z(x, vbar) + gamma2 * vbar
            return 2.0 * beta * (math.tanh(a) - vbar) * math.cosh(a)

        return CoefficientSet(
            z=z,
            b=b,
            sigma=lambda x, vbar: math.sqrt(lam * var_xi),
            c2=lambda x, vbar: 0.0,
            n=math.inf,
        )
    raise ValueError("unknown limit model %r" % (model,))


def coefficient_convergence_check(spec_family, limit, grid, ns, embed, reduce_b):
    """Sup gaps between finite and limit coefficients over a reduced grid.

    ``grid`` is a list of (price, vbar) points; ``embed(n, vbar)`` builds the
    full character vector for the n-agent market and ``reduce_b`` maps a
    finite b-vector to the scalar compared against the limit drift.  Returns
    per-coefficient, per-n max gaps plus flags for gaps that fail to shrink.
    """
    report = {"ns": list(ns), "gaps": {}, "flags": []}
    names = ("z", "b", "sigma", "c2")
    for name in names:
        report["gaps"][name] = []
    for n in ns:
        fin = finite_coefficients(spec_family(n))
        gz = gb = gs = gc = 0.0
        for x, vbar in grid:
            v = embed(n, vbar)
            gz = max(gz, abs(fin.z(x, v) - limit.z(x, vbar)))
            gb = max(gb, abs(reduce_b(fin.b(x, v)) - limit.b(x, vbar)))
            gs = max(gs, abs(fin.sigma(x, v) - limit.sigma(x, vbar)))
            gc = max(gc, float(np.max(np.abs(fin.c2(x, v)))))
        for name, g in zip(names, (gz, gb, gs, gc)):
            report["gaps"][name].append(g)
    for name in names:
        gaps = report["gaps"][name]
        if gaps[-1] > 1e-12 and gaps[-1] > 0.5 * gaps[0]:
            report["flags"].append("%s gap fails to vanish with n" % name)
    return report


def monte_carlo_moment_check(spec, points, n_samples=10 ** 6, seed=0, reduction=None):
    """Single-event Monte Carlo estimates of the kernel moments at grid points.

    For each (price, character) point, replays ``n_samples`` independent
    single events from that state and returns sample moments of the price and
    character increments (scaled by nu) alongside the closed-form targets.
    Standard errors are of the scaled sample means.  ``reduction`` is an
    optional weight vector u; when given, moments of the scalar u . dM (for
    example the average-opinion increment) are reported as well.
    """
    coeff = finite_coefficients(spec)
    n, m = spec.n, spec.states.m
    d1, d2 = spec.scaling.d1, spec.scaling.d2
    jump = float(n) ** (-d1)
    impact = spec.pricing.alpha * float(n) ** (-d2)
    reports = []
    for pt_index, (x, v) in enumerate(points):
        v = np.asarray(v, dtype=float)
        counts = np.rint(v * float(n) ** d1).astype(np.int64)
        if int(counts.sum()) != n:
            raise ValueError("grid character inconsistent with n agents")
        rng = np.random.Generator(np.random.Philox(key=[seed, pt_index]))
        lam = np.array([b.trading_intensity(x, v) for b in spec.behaviors])
        mu = np.array([b.transition_rate(x, v) for b in spec.behaviors])
        trade_mass = counts * lam
        trans_mass = counts * mu
        cum = np.cumsum(np.concatenate([trade_mass, trans_mass]))
        nu = float(cum[-1])
        u = rng.random(n_samples) * nu
        idx = np.minimum(np.searchsorted(cum, u, side="right"), 2 * m - 1)

        dP = np.zeros(n_samples)
        dM = np.zeros((n_samples, m))
        for i in range(m):
            sel = np.flatnonzero(idx == i)
            if sel.size:
                xi = spec.signals.sampler(rng, sel.size)
                q = spec.behaviors[i].excess_demand(x, v, xi, i)
                dP[sel] = impact * q
        for i in range(m):
            sel = np.flatnonzero(idx == m + i)
            if not sel.size:
                continue
            row = np.asarray(spec.behaviors[i].transition_matrix(x, v), dtype=float)[i]
            row = np.clip(row, 0.0, 1.0)
            row = row / row.sum()
            dest = np.minimum(np.searchsorted(np.cumsum(row), rng.random(sel.size), side="right"), m - 1)
            moved = dest != i
            dM[sel[moved], i] -= jump
            np.add.at(dM, (sel[moved], dest[moved]), jump)

        def scaled(samples):
            mean = nu * np.mean(samples, axis=0)
            se = nu * np.std(samples, axis=0, ddof=1) / math.sqrt(n_samples)
            return mean, se

        dp_mean, dp_se = scaled(dP)
        dm_mean, dm_se = scaled(dM)
        dm2_mean, dm2_se = scaled(dM[:, :, None] * dM[:, None, :])
        report = {
            "point": (x, v),
            "nu": nu,
            "dP_mean": float(dp_mean),
            "dP_se": float(dp_se),
            "dP_target": spec.pricing.alpha * coeff.z(x, v),
            "dM_mean": dm_mean,
            "dM_se": dm_se,
            "dM_target": coeff.b(x, v),
            "dM2_mean": dm2_mean,
            "dM2_se": dm2_se,
            "dM2_target": coeff.c2(x, v),
        }
        if reduction is not None:
            u_vec = np.asarray(reduction, dtype=float)
            dU = dM @ u_vec
            du_mean, du_se = scaled(dU)
            du2_mean, du2_se = scaled(dU ** 2)
            report.update(
                {
                    "dU_mean": float(du_mean),
                    "dU_se": float(du_se),
                    "dU_target": float(u_vec @ coeff.b(x, v)),
                    "dU2_mean": float(du2_mean),
                    "dU2_se": float(du2_se),
                    "dU2_target": float(u_vec @ coeff.c2(x, v) @ u_vec),
                }
            )
        reports.append(report)
    return reports
