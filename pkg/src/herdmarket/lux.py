"""The two shipped herding markets: a pure opinion model and its extension
with fundamentalist traders.

Pure model: two noise-trader states (pessimist, optimist) with switching
probabilities beta*exp(+/- gamma*Mbar), unit transition rates, no trading.
The average opinion Mbar lives on the lattice {-1, -1+2/n, ..., 1} and has a
closed-form stationary law with a unimodal/bimodal phase transition in gamma.

Extended model: a third, fixed population of fundamentalists trades toward a
fundamental value F while noise traders react to a price-and-mood signal
zhat = lambda_bar*(phi*w2(F, P) + (1-phi)*w1*Mbar) through switching
probabilities beta*exp(+/-(gamma1*zhat + gamma2*Mbar)).

Fast simulation paths use the compiled kernels when w2 is the shipped linear
family; arbitrary w2 callables run through the generic engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import gammaln, logsumexp

from . import kernels
from .engine import (
    AgentBehavior,
    EventStreams,
    ModelSpec,
    PricingRule,
    ScalingExponents,
    SignalLaw,
    StateSpace,
    simulate_trajectory,
)
from .errors import DivergedError
from .integrators import OdeProblem, SdeProblem


def _check_even(n, what):
    if n % 2 != 0:
        raise ValueError("%s must be even" % what)


@dataclass(frozen=True)
class LuxPureParams:
    n: int
    beta: float
    gamma: float
    initial_vbar: float = 0.0
    initial_law: Optional[Callable] = None  # rng -> counts, overrides initial_vbar

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        _check_even(self.n, "n")
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("beta and gamma must be positive")
        if self.beta >= math.exp(-self.gamma):
            raise ValueError("beta must satisfy beta < exp(-gamma)")
        if self.initial_law is None:
            _counts_from_vbar(self.n, self.initial_vbar)


@dataclass(frozen=True)
class LuxExtendedParams:
    n: int
    k_n: int  # fundamentalist count
    beta: float
    gamma1: float
    gamma2: float
    alpha: float
    lambda_bar: float = 1.0
    w1: float = 1.0
    w2: Union[float, Callable] = 1.0  # number kappa means w2(F, x) = kappa*(F - x)
    F: float = 50.0
    signal_std: float = 0.2
    initial_price: float = 50.0
    initial_vbar: float = 0.0
    initial_price_law: Optional[Callable] = None
    initial_state_law: Optional[Callable] = None

    def __post_init__(self):
        if self.n < 2 or not 0 <= self.k_n <= self.n:
            raise ValueError("need n >= 2 and 0 <= k_n <= n")
        _check_even(self.n - self.k_n, "noise-trader count n - k_n")
        if min(self.beta, self.gamma1, self.gamma2, self.alpha, self.lambda_bar, self.w1) <= 0:
            raise ValueError("beta, gamma1, gamma2, alpha, lambda_bar, w1 must be positive")
        if self.signal_std < 0:
            raise ValueError("signal_std must be nonnegative")
        if self.initial_state_law is None:
            _noise_counts_from_vbar(self.n - self.k_n, self.initial_vbar)

    @property
    def phi_n(self):
        return self.k_n / self.n

    @property
    def kappa(self):
        """Slope of the shipped linear w2 family, None for custom callables."""
        return None if callable(self.w2) else float(self.w2)

    def w2_function(self):
        if callable(self.w2):
            return self.w2
        kappa = float(self.w2)
        return lambda F, x: kappa * (F - x)


def _counts_from_vbar(n, vbar):
    k_opt = n * (1.0 + vbar) / 2.0
    if abs(k_opt - round(k_opt)) > 1e-9 or not -1.0 <= vbar <= 1.0:
        raise ValueError("initial_vbar must lie on the opinion lattice for this n")
    k_opt = int(round(k_opt))
    return np.array([n - k_opt, k_opt], dtype=np.int64)


def _noise_counts_from_vbar(n_noise, vbar):
    k_opt = n_noise * (1.0 + vbar) / 2.0
    if abs(k_opt - round(k_opt)) > 1e-9 or not -1.0 <= vbar <= 1.0:
        raise ValueError("initial_vbar must lie on the opinion lattice for this n, k_n")
    k_opt = int(round(k_opt))
    return np.array([n_noise - k_opt, k_opt], dtype=np.int64)


def build_pure(params):
    """ModelSpec of the two-state pure opinion market (transition-only)."""
    beta, gamma = params.beta, params.gamma
    n = params.n

    def transition_matrix(x, v):
        mbar = v[1] - v[0]
        p01 = beta * math.exp(gamma * mbar)
        p10 = beta * math.exp(-gamma * mbar)
        return np.array([[1.0 - p01, p01], [p10, 1.0 - p10]])

    behavior = AgentBehavior(
        trading_intensity=lambda x, v: 0.0,
        transition_rate=lambda x, v: 1.0,
        transition_matrix=transition_matrix,
        excess_demand=lambda x, v, xi, state: 0.0,
        demand_mean=lambda x, v: 0.0,
        demand_second_moment=lambda x, v: 0.0,
    )
    if params.initial_law is not None:
        initial_state_law = params.initial_law
    else:
        counts0 = _counts_from_vbar(n, params.initial_vbar)
        initial_state_law = lambda rng: counts0
    return ModelSpec(
        states=StateSpace(labels=("pessimist", "optimist")),
        n=n,
        scaling=ScalingExponents(d1=1.0, d2=0.5),
        behaviors=[behavior, behavior],
        pricing=PricingRule(alpha=1.0),
        signals=SignalLaw(sampler=lambda rng, size=None: 0.0 if size is None else np.zeros(size), mean=0.0, variance=0.0),
        initial_price_law=lambda rng: 0.0,
        initial_state_law=initial_state_law,
    )


def build_extended(params):
    """ModelSpec of the three-state market with fundamentalists.

    States: 0 pessimist, 1 optimist, 2 fundamentalist.  All agents trade at
    rate lambda_bar and draw transition opportunities at rate 1; the
    fundamentalist transition row is the identity.
    """
    n = params.n
    beta = params.beta
    gamma1, gamma2 = params.gamma1, params.gamma2
    lam, phi, w1 = params.lambda_bar, params.phi_n, params.w1
    F = params.F
    w2 = params.w2_function()
    std = params.signal_std
    rootninv = float(n) ** (-0.5)
    one_m_phi = 1.0 - phi

    def transition_matrix(x, v):
        mbar = (v[1] - v[0]) / one_m_phi
        w2v = w2(F, x)
        zhat = lam * (phi * w2v + one_m_phi * w1 * mbar)
        a = gamma1 * zhat + gamma2 * mbar
        p01 = beta * math.exp(a)
        p10 = beta * math.exp(-a)
        return np.array(
            [[1.0 - p01, p01, 0.0], [p10, 1.0 - p10, 0.0], [0.0, 0.0, 1.0]]
        )

    def make_behavior(state):
        if state == 0:
            demand = lambda x, v, xi, st: -1.0 * w1 * rootninv + xi
            det = lambda x, v: -1.0 * w1 * rootninv
        elif state == 1:
            demand = lambda x, v, xi, st: 1.0 * w1 * rootninv + xi
            det = lambda x, v: 1.0 * w1 * rootninv
        else:
            demand = lambda x, v, xi, st: w2(F, x) * rootninv + xi
            det = lambda x, v: w2(F, x) * rootninv
        return AgentBehavior(
            trading_intensity=lambda x, v: lam,
            transition_rate=lambda x, v: 1.0,
            transition_matrix=transition_matrix,
            excess_demand=demand,
            demand_mean=det,
            demand_second_moment=lambda x, v, det=det: det(x, v) ** 2 + std ** 2,
        )

    if params.initial_state_law is not None:
        initial_state_law = params.initial_state_law
    else:
        noise = _noise_counts_from_vbar(n - params.k_n, params.initial_vbar)
        counts0 = np.array([noise[0], noise[1], params.k_n], dtype=np.int64)
        initial_state_law = lambda rng: counts0
    if params.initial_price_law is not None:
        initial_price_law = params.initial_price_law
    else:
        p0 = float(params.initial_price)
        initial_price_law = lambda rng: p0
    return ModelSpec(
        states=StateSpace(labels=("pessimist", "optimist", "fundamentalist")),
        n=n,
        scaling=ScalingExponents(d1=1.0, d2=0.5),
        behaviors=[make_behavior(0), make_behavior(1), make_behavior(2)],
        pricing=PricingRule(alpha=params.alpha),
        signals=SignalLaw(
            sampler=lambda rng, size=None: rng.standard_normal(size) * std,
            mean=0.0,
            variance=std ** 2,
        ),
        initial_price_law=initial_price_law,
        initial_state_law=initial_state_law,
    )


@dataclass(frozen=True)
class StationaryDistribution:
    lattice: np.ndarray  # average-opinion values, length n+1
    probabilities: np.ndarray
    mode_structure: str  # "unimodal-at-0" | "bimodal"


def stationary_distribution(params):
    """Closed-form stationary law of the pure model's average opinion.

    Evaluated in log space (log-binomials via gammaln, log-sum-exp
    normalization) so large n is exact to float precision.
    """
    n, gamma = params.n, params.gamma
    k = np.arange(n + 1)
    vbar = 2.0 * k / n - 1.0
    logp = (
        gammaln(n + 1)
        - gammaln(k + 1)
        - gammaln(n - k + 1)
        + 0.5 * gamma * n * vbar ** 2
    )
    logp -= logsumexp(logp)
    p = np.exp(logp)
    mid = n // 2
    mode = "bimodal" if p[mid + 1] > p[mid] else "unimodal-at-0"
    return StationaryDistribution(lattice=vbar, probabilities=p, mode_structure=mode)


def gamma_threshold(n):
    """Herding intensity separating unimodal and bimodal stationary laws."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return 0.5 * n * math.log1p(2.0 / n)


def tanh_fixed_point(gamma, tol=1e-13):
    """Largest nonnegative solution of y = tanh(gamma*y), by bisection."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if gamma <= 1.0:
        return 0.0
    lo, hi = 1e-12, 1.0  # f(y) = tanh(gamma*y) - y is positive near 0, negative at 1
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = math.tanh(gamma * mid) - mid
        if abs(f) < tol:
            return mid
        if f > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def convergence_constant(beta, gamma):
    """Constant 2*sqrt(beta)*|y*| with y* the root of 1 - y*tanh(gamma*y)."""
    if beta <= 0 or gamma <= 0:
        raise ValueError("beta and gamma must be positive")
    lo, hi = 0.0, 1.0
    while 1.0 - hi * math.tanh(gamma * hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = 1.0 - mid * math.tanh(gamma * mid)
        if abs(f) < 1e-13:
            break
        if f > 0:
            lo = mid
        else:
            hi = mid
    ystar = 0.5 * (lo + hi)
    return 2.0 * math.sqrt(beta) * ystar


def equilibria(phi, w1, w2, F, gamma2):
    """Joint equilibria (vbar*, x*) of the limit price/opinion dynamics.

    Solves phi*w2(F, x) + (1 - phi)*w1*vbar = 0 at each opinion fixed point
    vbar in {0} or {0, +v*, -v*}; w2 must change sign in x on some bracket
    around F.
    """
    if not 0 < phi <= 1:
        raise ValueError("phi must be in (0, 1]")
    w2f = w2 if callable(w2) else (lambda F_, x, kappa=float(w2): kappa * (F_ - x))

    def solve_price(vbar):
        target = lambda x: phi * w2f(F, x) + (1.0 - phi) * w1 * vbar
        span = max(1.0, abs(F))
        for _ in range(60):
            lo, hi = F - span, F + span
            flo, fhi = target(lo), target(hi)
            if flo == 0.0:
                return lo
            if fhi == 0.0:
                return hi
            if flo * fhi < 0:
                from scipy.optimize import brentq

                return float(brentq(target, lo, hi, xtol=1e-14, rtol=8.9e-16))
            span *= 2.0
        raise ValueError("w2 is not invertible in price near F")

    points = [(0.0, solve_price(0.0))]
    vstar = tanh_fixed_point(gamma2)
    if vstar > 0:
        points.append((vstar, solve_price(vstar)))
        points.append((-vstar, solve_price(-vstar)))
    return points


@dataclass
class PureChainPath:
    """Event-indexed opinion path of the pure model (price is constant)."""

    n: int
    horizon: float
    initial_counts: np.ndarray
    times: np.ndarray
    counts_opt: np.ndarray

    @property
    def vbar(self):
        ninv = float(self.n) ** (-1.0)
        copt = self.counts_opt.astype(np.float64)
        return copt * ninv - (self.n - self.counts_opt).astype(np.float64) * ninv

    @property
    def initial_vbar(self):
        ninv = float(self.n) ** (-1.0)
        return float(self.initial_counts[1] * ninv - self.initial_counts[0] * ninv)


@dataclass
class ExtendedChainPath:
    """Event-indexed price/opinion path of the extended model."""

    n: int
    phi_n: float
    horizon: float
    initial_price: float
    initial_counts: np.ndarray
    times: np.ndarray
    prices: np.ndarray
    counts_pess: np.ndarray
    counts_opt: np.ndarray
    kinds: np.ndarray  # 0 trade, 1 transition
    clamp_warnings: int

    @property
    def vbar(self):
        ninv = float(self.n) ** (-1.0)
        v1 = self.counts_opt.astype(np.float64) * ninv
        v0 = self.counts_pess.astype(np.float64) * ninv
        return (v1 - v0) / (1.0 - self.phi_n)

    @property
    def initial_vbar(self):
        ninv = float(self.n) ** (-1.0)
        return float(
            (self.initial_counts[1] * ninv - self.initial_counts[0] * ninv)
            / (1.0 - self.phi_n)
        )


def _event_budget(nu, horizon):
    mean = nu * horizon
    return int(mean + 6.0 * math.sqrt(mean + 1.0) + 64)


def simulate_pure(params, horizon, seed):
    """Fast pure-model trajectory, draw-for-draw equal to the engine's."""
    spec = build_pure(params)
    n = params.n
    budget = _event_budget(float(n), horizon)
    while True:
        streams = EventStreams(seed)
        spec.initial_price_law(streams.init)
        counts = np.asarray(spec.initial_state_law(streams.init), dtype=np.int64)
        exps = streams.time.standard_exponential(budget)
        acts = streams.action.random(budget)
        dests = streams.dest.random(budget)
        times = np.empty(budget)
        copt = np.empty(budget, dtype=np.int64)
        k, t, c0, c1, done = kernels.pure_chain(
            int(counts[0]), int(counts[1]), 0.0, n, params.beta, params.gamma,
            horizon, exps, acts, dests, times, copt,
        )
        if done:
            return PureChainPath(
                n=n,
                horizon=horizon,
                initial_counts=counts.copy(),
                times=times[:k].copy(),
                counts_opt=copt[:k].copy(),
            )
        budget *= 2


def simulate_extended(params, horizon, seed):
    """Fast extended-model trajectory; falls back to the generic engine when
    w2 is a custom callable."""
    spec = build_extended(params)
    if params.kappa is None:
        traj = simulate_trajectory(spec, horizon, seed)
        return _extended_path_from_trajectory(params, traj)
    n = params.n
    nu = float(n) * (params.lambda_bar + 1.0)
    budget = _event_budget(nu, horizon)
    impact = params.alpha * float(n) ** (-0.5)
    rootninv = float(n) ** (-0.5)
    while True:
        streams = EventStreams(seed)
        price0 = float(spec.initial_price_law(streams.init))
        counts = np.asarray(spec.initial_state_law(streams.init), dtype=np.int64)
        exps = streams.time.standard_exponential(budget)
        acts = streams.action.random(budget)
        sigs = streams.signal.standard_normal(budget) * params.signal_std
        dests = streams.dest.random(budget)
        times = np.empty(budget)
        prices = np.empty(budget)
        cpess = np.empty(budget, dtype=np.int64)
        copt = np.empty(budget, dtype=np.int64)
        kinds = np.empty(budget, dtype=np.int8)
        k, t, price, c0, c1, done, clamped, err = kernels.extended_chain(
            int(counts[0]), int(counts[1]), int(counts[2]), 0.0, price0, n,
            params.beta, params.gamma1, params.gamma2, params.lambda_bar,
            params.phi_n, params.w1, params.kappa, params.F, impact, rootninv,
            horizon, exps, acts, sigs, dests, times, prices, cpess, copt, kinds,
        )
        if err:
            raise DivergedError("diverged: price left the admissible range")
        if done:
            return ExtendedChainPath(
                n=n,
                phi_n=params.phi_n,
                horizon=horizon,
                initial_price=price0,
                initial_counts=counts.copy(),
                times=times[:k].copy(),
                prices=prices[:k].copy(),
                counts_pess=cpess[:k].copy(),
                counts_opt=copt[:k].copy(),
                kinds=kinds[:k].copy(),
                clamp_warnings=int(clamped),
            )
        budget *= 2


def _extended_path_from_trajectory(params, traj):
    times = traj.times()
    prices = np.empty(len(traj.events))
    cpess = np.empty(len(traj.events), dtype=np.int64)
    copt = np.empty(len(traj.events), dtype=np.int64)
    kinds = np.empty(len(traj.events), dtype=np.int8)
    price = traj.initial_price
    for i, e in enumerate(traj.events):
        if e.kind == "trade":
            price = e.detail[1]
        prices[i] = price
        counts = np.rint(e.character_after * traj.n).astype(np.int64)
        cpess[i] = counts[0]
        copt[i] = counts[1]
        kinds[i] = 0 if e.kind == "trade" else 1
    return ExtendedChainPath(
        n=traj.n,
        phi_n=params.phi_n,
        horizon=traj.horizon,
        initial_price=traj.initial_price,
        initial_counts=traj.initial_counts.copy(),
        times=times,
        prices=prices,
        counts_pess=cpess,
        counts_opt=copt,
        kinds=kinds,
        clamp_warnings=traj.clamp_warnings,
    )


def occupation_histogram(params, n_events, seed, burn_in=0.1, chunk=1_000_000):
    """Time-weighted occupation law of the pure model's average opinion over
    a single long trajectory of ``n_events`` events."""
    spec = build_pure(params)
    n = params.n
    streams = EventStreams(seed)
    spec.initial_price_law(streams.init)
    counts = np.asarray(spec.initial_state_law(streams.init), dtype=np.int64)
    c0, c1 = int(counts[0]), int(counts[1])
    occ = np.zeros(n + 1)
    skip = int(burn_in * n_events)
    t = 0.0
    k_done = 0
    while k_done < n_events:
        size = min(chunk, n_events - k_done)
        exps = streams.time.standard_exponential(size)
        acts = streams.action.random(size)
        dests = streams.dest.random(size)
        c0, c1, t, k_done = kernels.pure_occupation(
            c0, c1, t, n, params.beta, params.gamma, skip, k_done, exps, acts, dests, occ
        )
    lattice = 2.0 * np.arange(n + 1) / n - 1.0
    total = occ.sum()
    return lattice, occ / total


def pure_limit_ode(params, initial_vbar, horizon):
    """Deterministic large-market opinion dynamics of the pure model."""
    beta, gamma = params.beta, params.gamma

    def rhs(t, y):
        a = gamma * y[0]
        return np.array([2.0 * beta * (math.tanh(a) - y[0]) * math.cosh(a)])

    return OdeProblem(dimension=1, rhs=rhs, initial=[initial_vbar], horizon=horizon)


def _extended_drift(params):
    lam, w1, F = params.lambda_bar, params.w1, params.F
    phi = params.phi_n
    w2 = params.w2_function()
    alpha, beta = params.alpha, params.beta
    gamma1, gamma2 = params.gamma1, params.gamma2

    def drift(t, y):
        x, v = y
        z = lam * (phi * w2(F, x) + (1.0 - phi) * w1 * v)
        a = gamma1 * z + gamma2 * v
        return np.array([alpha * z, 2.0 * beta * (math.tanh(a) - v) * math.cosh(a)])

    return drift


def extended_limit_sde(params, horizon):
    """Price/opinion diffusion limit of the extended model (reduced coords)."""
    price_diff = params.alpha * math.sqrt(params.lambda_bar * params.signal_std ** 2)
    diffusion = lambda t, y: np.array([[price_diff], [0.0]])
    return SdeProblem(
        dimension=2,
        drift=_extended_drift(params),
        diffusion=diffusion,
        initial=[params.initial_price, params.initial_vbar],
        horizon=horizon,
        noise_dim=1,
    )


def extended_limit_ode(params, initial, horizon):
    """Noise-free limit dynamics of the extended model."""
    return OdeProblem(dimension=2, rhs=_extended_drift(params), initial=initial, horizon=horizon)


def simulate_extended_sde(params, horizon, step, seed, thin=1):
    """Compiled Euler path of the extended diffusion limit, for long horizons."""
    if params.kappa is None:
        raise ValueError("compiled SDE path needs the linear w2 family")
    nsteps = int(round(horizon / step))
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 10]))
    normals = rng.standard_normal(nsteps)
    n_rec = nsteps // thin + 1
    xs = np.empty(n_rec)
    vs = np.empty(n_rec)
    price_diff = params.alpha * math.sqrt(params.lambda_bar * params.signal_std ** 2)
    j, err = kernels.extended_sde_em(
        float(params.initial_price), float(params.initial_vbar), step, nsteps,
        params.alpha, params.beta, params.gamma1, params.gamma2,
        params.lambda_bar, params.phi_n, params.w1, params.kappa, params.F,
        price_diff, normals, thin, xs, vs,
    )
    if err:
        raise DivergedError("diverged: non-finite SDE state")
    times = np.arange(j) * (step * thin)
    return times, xs[:j], vs[:j]


def pure_family(beta, gamma, initial_vbar=0.0):
    """n -> ModelSpec family of pure markets with shared parameters."""
    return lambda n: build_pure(
        LuxPureParams(n=n, beta=beta, gamma=gamma, initial_vbar=initial_vbar)
    )


def pure_embed(n, vbar):
    """Character vector of the 2-state market at average opinion vbar."""
    return np.array([(1.0 - vbar) / 2.0, (1.0 + vbar) / 2.0])


def pure_reduce_b(bvec):
    """Average-opinion drift from the per-state drift vector."""
    return bvec[1] - bvec[0]


def extended_embed(phi_n):
    """(n, vbar) -> character embedding at fundamentalist share phi_n."""

    def embed(n, vbar):
        w = 1.0 - phi_n
        return np.array([w * (1.0 - vbar) / 2.0, w * (1.0 + vbar) / 2.0, phi_n])

    return embed


def extended_reduce_b(phi_n):
    """Average-opinion drift from the 3-state drift vector."""
    return lambda bvec: (bvec[1] - bvec[0]) / (1.0 - phi_n)
