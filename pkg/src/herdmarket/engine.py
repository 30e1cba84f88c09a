"""Event-driven simulator for finite markets of interacting agents.

A market is a pool of n agents, each carrying a state from a finite state
space.  Agents act one at a time in continuous time: an action is either a
trade (moves the price through a near-affine price-impact rule) or a state
transition (moves the market character, the vector of scaled per-state
counts).  Waiting times between actions are exponential with rate equal to
the aggregate action rate, so the pair (price, character) is a time
homogeneous pure-jump Markov process.

The engine keeps per-state counts only when all agents of a state share the
same behavior functions (homogeneous mode, O(m) per event); a per-agent list
of behaviors switches it to heterogeneous mode (O(n) per event).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DivergedError, EventBudgetError, FrozenMarketError

PRICE_GUARD = 1e12
DEFAULT_EVENT_CAP = 10 ** 8

# Philox substream ids; one counter-based stream per draw type so that
# draw-by-draw consumption matches chunked pre-generation in the fast kernels.
_STREAM_TIME = 0
_STREAM_ACTION = 1
_STREAM_SIGNAL = 2
_STREAM_DEST = 3
_STREAM_INIT = 4


class EventStreams:
    """Bundle of independent seeded streams used by one trajectory."""

    def __init__(self, seed):
        self.seed = int(seed)
        self.time = self._stream(_STREAM_TIME)
        self.action = self._stream(_STREAM_ACTION)
        self.signal = self._stream(_STREAM_SIGNAL)
        self.dest = self._stream(_STREAM_DEST)
        self.init = self._stream(_STREAM_INIT)

    def _stream(self, stream_id):
        return np.random.Generator(np.random.Philox(key=[self.seed, stream_id]))


@dataclass(frozen=True)
class StateSpace:
    """Finite set of agent states."""

    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 1:
            raise ValueError("state space must contain at least one state")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("state labels must be unique")

    @property
    def m(self):
        return len(self.labels)


@dataclass(frozen=True)
class ScalingExponents:
    """Scaling of the market character (d1) and of demand/price impact (d2)."""

    d1: float
    d2: float

    def __post_init__(self):
        if self.d1 < 0.5 or self.d2 < 0.5:
            raise ValueError("scaling exponents must be >= 1/2")


@dataclass(frozen=True)
class AgentBehavior:
    """Behavior functions of one agent class.

    All callables take (price, character); ``excess_demand`` additionally
    takes the drawn signal and the agent's own state index.  ``demand_mean``
    and ``demand_second_moment`` are optional closed-form moments of the
    excess demand over the signal law; when absent they are estimated by
    Monte Carlo where needed.
    """

    trading_intensity: Callable
    transition_rate: Callable
    transition_matrix: Callable
    excess_demand: Callable
    demand_mean: Optional[Callable] = None
    demand_second_moment: Optional[Callable] = None


@dataclass(frozen=True)
class PricingRule:
    """Near-affine market-maker rule: new price = x + alpha * n^(-d2) * q (+ u)."""

    alpha: float
    perturbation: Optional[Callable] = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def apply(self, demand, price, n, d2):
        new_price = price + self.alpha * float(n) ** (-d2) * demand
        if self.perturbation is not None:
            new_price += self.perturbation(demand, price)
        return new_price


@dataclass(frozen=True)
class SignalLaw:
    """I.i.d. exogenous signal law; ``sampler(rng, size=None)`` draws from it."""

    sampler: Callable
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


@dataclass(frozen=True)
class ModelSpec:
    """Complete description of a finite market.

    ``behaviors`` is a list of m AgentBehavior (one per state class,
    homogeneous mode) or of n AgentBehavior (one per agent, heterogeneous
    mode, selected with ``heterogeneous=True``).  ``initial_state_law``
    returns per-state counts (homogeneous) or a length-n array of state
    indices (heterogeneous) when called with a Generator.
    """

    states: StateSpace
    n: int
    scaling: ScalingExponents
    behaviors: Sequence[AgentBehavior]
    pricing: PricingRule
    signals: SignalLaw
    initial_price_law: Callable
    initial_state_law: Callable
    heterogeneous: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        expected = self.n if self.heterogeneous else self.states.m
        if len(self.behaviors) != expected:
            raise ValueError(
                "expected %d behavior entries, got %d" % (expected, len(self.behaviors))
            )


@dataclass
class MarketSnapshot:
    """Evolving simulator state at one action time."""

    time: float
    price: float
    counts: np.ndarray
    character: np.ndarray
    streams: EventStreams

    def check(self, n):
        if int(self.counts.sum()) != n:
            raise ValueError("counts must sum to n")


@dataclass(frozen=True)
class EventRecord:
    """One action: a trade (price moves) or a transition (character moves)."""

    time: float
    kind: str  # "trade" | "transition"
    actor_state: object
    detail: tuple  # trade: (demand, new_price); transition: (from_label, to_label)
    character_after: np.ndarray


@dataclass
class Trajectory:
    """Piecewise-constant right-continuous sample path of (price, character)."""

    initial_price: float
    initial_counts: np.ndarray
    initial_character: np.ndarray
    events: list
    horizon: float
    n: int
    d1: float
    clamp_warnings: int = 0

    def times(self):
        return np.array([e.time for e in self.events])

    def price_path(self):
        """(times, prices) step function including the initial value at t=0."""
        t = np.concatenate([[0.0], self.times()])
        p = [self.initial_price]
        for e in self.events:
            p.append(e.detail[1] if e.kind == "trade" else p[-1])
        return t, np.array(p)

    def character_path(self):
        t = np.concatenate([[0.0], self.times()])
        rows = [self.initial_character]
        for e in self.events:
            rows.append(e.character_after)
        return t, np.vstack(rows)


def compute_character(counts, n, d1):
    """Scaled per-state counts M^i = counts_i * n^(-d1)."""
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if int(counts.sum()) != int(n):
        raise ValueError("counts must sum to n")
    return counts * float(n) ** (-d1)


def _state_masses(price, character, behaviors, counts):
    """Per-state trading and transition mass (count * intensity)."""
    m = len(counts)
    lam = np.empty(m)
    mu = np.empty(m)
    for i, b in enumerate(behaviors):
        lam[i] = b.trading_intensity(price, character)
        mu[i] = b.transition_rate(price, character)
    if np.any(~np.isfinite(lam)) or np.any(lam < 0) or np.any(~np.isfinite(mu)) or np.any(mu < 0):
        raise ValueError("intensities must be finite and nonnegative")
    return counts * lam, counts * mu


def _counts_from_character(character, n, d1):
    counts = np.rint(np.asarray(character) * float(n) ** d1).astype(np.int64)
    if int(counts.sum()) != int(n):
        raise ValueError("character is not consistent with n agents")
    return counts


def action_probabilities(price, character, behaviors, n, d1):
    """Trade/transition split of the next action and per-state actor weights.

    Returns a dict with ``p_trade``, ``p_transition``, ``nu`` and the
    normalized per-state weights within each category.
    """
    counts = _counts_from_character(character, n, d1)
    trade_mass, trans_mass = _state_masses(price, character, behaviors, counts)
    cum = np.cumsum(np.concatenate([trade_mass, trans_mass]))
    nu = float(cum[-1])
    if nu <= 0.0:
        raise FrozenMarketError("frozen market: aggregate action rate is zero")
    lam_tot = float(trade_mass.sum())
    mu_tot = float(trans_mass.sum())
    return {
        "p_trade": lam_tot / nu,
        "p_transition": mu_tot / nu,
        "nu": nu,
        "trade_weights": trade_mass / lam_tot if lam_tot > 0 else np.zeros_like(trade_mass),
        "transition_weights": trans_mass / mu_tot if mu_tot > 0 else np.zeros_like(trans_mass),
    }


def aggregated_propensities(character, n, d1, transition_matrix):
    """Aggregated propensities (leave, join) per state for one shared matrix.

    leave_i = n^(d1-1) * M^i * sum_{j != i} Pi[i, j]
    join_i  = n^(d1-1) * sum_{j != i} M^j * Pi[j, i]
    """
    pi = np.asarray(transition_matrix, dtype=float)
    v = np.asarray(character, dtype=float)
    scale = float(n) ** (d1 - 1.0)
    off = pi - np.diag(np.diag(pi))
    leave = scale * v * off.sum(axis=1)
    join = scale * (v @ off)
    return leave, join


def character_step_probabilities(price, character, behaviors, n, d1):
    """Per-state probabilities that the next action moves M^i down or up."""
    counts = _counts_from_character(character, n, d1)
    trade_mass, trans_mass = _state_masses(price, character, behaviors, counts)
    nu = float(trade_mass.sum() + trans_mass.sum())
    if nu <= 0.0:
        raise FrozenMarketError("frozen market: aggregate action rate is zero")
    m = len(counts)
    rows = np.vstack(
        [np.asarray(behaviors[j].transition_matrix(price, character), dtype=float)[j] for j in range(m)]
    )
    off = rows - np.diag(np.diag(rows))
    p_down = trans_mass * off.sum(axis=1) / nu
    p_up = (trans_mass @ off) / nu
    return p_down, p_up


def sample_intra_action_time(rng, nu):
    """Exponential waiting time gamma/nu with a unit-exponential draw gamma."""
    if nu <= 0:
        raise FrozenMarketError("frozen market: aggregate action rate is zero")
    return rng.standard_exponential() / nu


def _clamped_row(behavior, price, character, row_index):
    """Transition-matrix row for an actor, clamped to [0,1] and renormalized.

    Returns (row, clamped_flag).  Clamping is a safety net for transition
    probabilities that leave [0,1] at extreme prices.
    """
    row = np.asarray(behavior.transition_matrix(price, character), dtype=float)[row_index].copy()
    clamped = bool(np.any(row < 0.0) or np.any(row > 1.0))
    if clamped:
        np.clip(row, 0.0, 1.0, out=row)
        total = row.sum()
        if total <= 0.0:
            raise ValueError("transition row has no admissible mass after clamping")
        row /= total
    return row, clamped


def _pick_destination(row, u):
    """Destination index for uniform u against the row's cumulative sums.

    If float summation leaves u past the last partial sum, fall back to the
    last state with positive mass so zero-probability destinations are never
    selected.
    """
    dest = min(int(np.searchsorted(np.cumsum(row), u, side="right")), len(row) - 1)
    while dest > 0 and row[dest] <= 0.0:
        dest -= 1
    return dest


def execute_trade(snapshot, behaviors, pricing, signals, n, scaling, actor_state=None):
    """Execute one trade: draw a signal, compute the demand, move the price.

    The character is unchanged (an action is either a trade or a transition).
    ``actor_state`` may be pre-sampled by the event loop; otherwise the actor
    state is drawn proportional to per-state trading mass.
    """
    price, character = snapshot.price, snapshot.character
    if actor_state is None:
        trade_mass, _ = _state_masses(price, character, behaviors, snapshot.counts)
        total = trade_mass.sum()
        if total <= 0:
            raise FrozenMarketError("no trading mass")
        u = snapshot.streams.dest.random() * total
        actor_state = min(int(np.searchsorted(np.cumsum(trade_mass), u, side="right")), len(trade_mass) - 1)
    xi = signals.sampler(snapshot.streams.signal)
    behavior = behaviors[actor_state]
    q = behavior.excess_demand(price, character, xi, actor_state)
    if not math.isfinite(q):
        raise DivergedError("diverged: non-finite excess demand")
    new_price = pricing.apply(q, price, n, scaling.d2)
    if not math.isfinite(new_price) or abs(new_price) > PRICE_GUARD:
        raise DivergedError("diverged: price left the admissible range")
    snapshot.price = float(new_price)
    return EventRecord(
        time=snapshot.time,
        kind="trade",
        actor_state=actor_state,
        detail=(float(q), float(new_price)),
        character_after=snapshot.character,
    )


def execute_transition(snapshot, behaviors, n, scaling, actor_state=None):
    """Execute one state transition: move one agent, update counts/character."""
    price, character = snapshot.price, snapshot.character
    if actor_state is None:
        _, trans_mass = _state_masses(price, character, behaviors, snapshot.counts)
        total = trans_mass.sum()
        if total <= 0:
            raise FrozenMarketError("no transition mass")
        u = snapshot.streams.dest.random() * total
        actor_state = min(int(np.searchsorted(np.cumsum(trans_mass), u, side="right")), len(trans_mass) - 1)
    row, clamped = _clamped_row(behaviors[actor_state], price, character, actor_state)
    u = snapshot.streams.dest.random()
    dest = _pick_destination(row, u)
    if dest != actor_state:
        snapshot.counts[actor_state] -= 1
        snapshot.counts[dest] += 1
        snapshot.character = snapshot.counts * float(n) ** (-scaling.d1)
    record = EventRecord(
        time=snapshot.time,
        kind="transition",
        actor_state=actor_state,
        detail=(actor_state, dest),
        character_after=snapshot.character,
    )
    return record, clamped


def simulate_trajectory(spec, horizon, seed, event_cap=DEFAULT_EVENT_CAP):
    """Simulate the market until the first action time past ``horizon``.

    Identical (spec, horizon, seed) yields identical trajectories.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if spec.heterogeneous:
        return _simulate_heterogeneous(spec, horizon, seed, event_cap)

    streams = EventStreams(seed)
    n, d1 = spec.n, spec.scaling.d1
    price = float(spec.initial_price_law(streams.init))
    counts = np.asarray(spec.initial_state_law(streams.init), dtype=np.int64).copy()
    character = compute_character(counts, n, d1)
    initial_counts = counts.copy()
    initial_character = character.copy()
    snapshot = MarketSnapshot(0.0, price, counts, character, streams)
    snapshot.check(n)

    events = []
    clamp_warnings = 0
    m = spec.states.m
    while True:
        trade_mass, trans_mass = _state_masses(
            snapshot.price, snapshot.character, spec.behaviors, snapshot.counts
        )
        cum = np.cumsum(np.concatenate([trade_mass, trans_mass]))
        nu = float(cum[-1])
        if nu <= 0.0:
            raise FrozenMarketError("frozen market: aggregate action rate is zero")
        tau = streams.time.standard_exponential() / nu
        t_new = snapshot.time + tau
        if t_new > horizon:
            break
        if t_new <= snapshot.time:  # measure-zero float tie; keep strict ordering
            t_new = np.nextafter(snapshot.time, np.inf)
        snapshot.time = float(t_new)

        u = streams.action.random() * nu
        idx = min(int(np.searchsorted(cum, u, side="right")), 2 * m - 1)
        if idx < m:
            record = execute_trade(
                snapshot, spec.behaviors, spec.pricing, spec.signals, n, spec.scaling, actor_state=idx
            )
        else:
            record, clamped = execute_transition(
                snapshot, spec.behaviors, n, spec.scaling, actor_state=idx - m
            )
            clamp_warnings += clamped
        events.append(record)
        if len(events) > event_cap:
            raise EventBudgetError("event budget exceeded (%d events)" % event_cap)

    return Trajectory(
        initial_price=price,
        initial_counts=initial_counts,
        initial_character=initial_character,
        events=events,
        horizon=horizon,
        n=n,
        d1=d1,
        clamp_warnings=clamp_warnings,
    )


def _simulate_heterogeneous(spec, horizon, seed, event_cap):
    """Per-agent event loop: O(n) actor sampling per event."""
    streams = EventStreams(seed)
    n, d1 = spec.n, spec.scaling.d1
    price = float(spec.initial_price_law(streams.init))
    agent_states = np.asarray(spec.initial_state_law(streams.init), dtype=np.int64).copy()
    if agent_states.shape != (n,):
        raise ValueError("heterogeneous initial_state_law must return n state indices")
    m = spec.states.m
    counts = np.bincount(agent_states, minlength=m).astype(np.int64)
    character = compute_character(counts, n, d1)
    snapshot = MarketSnapshot(0.0, price, counts, character, streams)

    initial_counts = counts.copy()
    events = []
    clamp_warnings = 0
    t = 0.0
    while True:
        lam = np.array([b.trading_intensity(snapshot.price, snapshot.character) for b in spec.behaviors])
        mu = np.array([b.transition_rate(snapshot.price, snapshot.character) for b in spec.behaviors])
        cum = np.cumsum(np.concatenate([lam, mu]))
        nu = float(cum[-1])
        if nu <= 0.0:
            raise FrozenMarketError("frozen market: aggregate action rate is zero")
        tau = streams.time.standard_exponential() / nu
        t_new = t + tau
        if t_new > horizon:
            break
        if t_new <= t:
            t_new = np.nextafter(t, np.inf)
        t = float(t_new)
        snapshot.time = t

        u = streams.action.random() * nu
        idx = min(int(np.searchsorted(cum, u, side="right")), 2 * n - 1)
        agent = idx % n
        behavior = spec.behaviors[agent]
        own_state = int(agent_states[agent])
        if idx < n:
            xi = spec.signals.sampler(streams.signal)
            q = behavior.excess_demand(snapshot.price, snapshot.character, xi, own_state)
            if not math.isfinite(q):
                raise DivergedError("diverged: non-finite excess demand")
            new_price = spec.pricing.apply(q, snapshot.price, n, spec.scaling.d2)
            if not math.isfinite(new_price) or abs(new_price) > PRICE_GUARD:
                raise DivergedError("diverged: price left the admissible range")
            snapshot.price = float(new_price)
            events.append(
                EventRecord(t, "trade", (agent, own_state), (float(q), float(new_price)), snapshot.character)
            )
        else:
            row, clamped = _clamped_row(behavior, snapshot.price, snapshot.character, own_state)
            clamp_warnings += clamped
            ud = streams.dest.random()
            dest = _pick_destination(row, ud)
            if dest != own_state:
                agent_states[agent] = dest
                snapshot.counts[own_state] -= 1
                snapshot.counts[dest] += 1
                snapshot.character = snapshot.counts * float(n) ** (-d1)
            events.append(
                EventRecord(t, "transition", (agent, own_state), (own_state, dest), snapshot.character)
            )
        if len(events) > event_cap:
            raise EventBudgetError("event budget exceeded (%d events)" % event_cap)

    return Trajectory(
        initial_price=price,
        initial_counts=initial_counts,
        initial_character=compute_character(initial_counts, n, d1),
        events=events,
        horizon=horizon,
        n=n,
        d1=d1,
        clamp_warnings=clamp_warnings,
    )
