"""Fixed-step integrators for the large-market limit dynamics.

Deterministic limits use classical fourth-order Runge-Kutta; stochastic
limits use Euler-Maruyama driven by a seeded Brownian grid that supports
bridge refinement, so step-halving studies compare against the same
underlying Brownian path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DivergedError


@dataclass(frozen=True)
class OdeProblem:
    dimension: int
    rhs: Callable
    initial: Sequence[float]
    horizon: float

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class SdeProblem:
    dimension: int
    drift: Callable
    diffusion: Callable  # (t, state) -> (dimension, noise_dim) matrix
    initial: Union[Sequence[float], Callable]
    horizon: float
    noise_dim: Optional[int] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass
class Path:
    times: np.ndarray
    values: np.ndarray  # (len(times), dimension)
    step: float

    def terminal(self):
        return self.values[-1]


def _grid(horizon, step):
    steps = max(1, int(math.ceil(horizon / step - 1e-9)))
    dt = horizon / steps
    return steps, dt, np.linspace(0.0, horizon, steps + 1)


def integrate_ode(problem, step=1e-2):
    """Classical RK4 with a uniform grid snapped to the horizon."""
    if step <= 0:
        raise ValueError("step must be positive")
    steps, dt, times = _grid(problem.horizon, step)
    y = np.asarray(problem.initial, dtype=float).copy()
    if y.shape != (problem.dimension,):
        raise ValueError("initial value has wrong dimension")
    values = np.empty((steps + 1, problem.dimension))
    values[0] = y
    rhs = problem.rhs
    for i in range(steps):
        t = times[i]
        k1 = np.asarray(rhs(t, y))
        k2 = np.asarray(rhs(t + 0.5 * dt, y + 0.5 * dt * k1))
        k3 = np.asarray(rhs(t + 0.5 * dt, y + 0.5 * dt * k2))
        k4 = np.asarray(rhs(t + dt, y + dt * k3))
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergedError("diverged: non-finite ODE state at t=%g" % t)
        values[i + 1] = y
    return Path(times=times, values=values, step=dt)


class BrownianGrid:
    """Brownian increments on a uniform grid with bridge refinement.

    ``refine()`` halves the step while keeping the path values at the coarse
    grid points, so integrations at successive refinements are pathwise
    coherent.
    """

    def __init__(self, horizon, steps, noise_dim, seed):
        self.horizon = horizon
        self.noise_dim = noise_dim
        self._rng = np.random.Generator(np.random.Philox(key=[int(seed), 10]))
        self.steps = steps
        dt = horizon / steps
        incs = self._rng.standard_normal((steps, noise_dim)) * math.sqrt(dt)
        self.w = np.vstack([np.zeros((1, noise_dim)), np.cumsum(incs, axis=0)])

    @property
    def step(self):
        return self.horizon / self.steps

    def increments(self):
        return np.diff(self.w, axis=0)

    def refine(self):
        dt = self.step
        mids = 0.5 * (self.w[:-1] + self.w[1:]) + self._rng.standard_normal(
            (self.steps, self.noise_dim)
        ) * math.sqrt(dt / 4.0)
        fine = np.empty((2 * self.steps + 1, self.noise_dim))
        fine[0::2] = self.w
        fine[1::2] = mids
        self.w = fine
        self.steps *= 2


def integrate_sde(problem, step=1e-2, seed=0, brownian=None):
    """Euler-Maruyama on a uniform grid; deterministic given (problem, seed)."""
    if step <= 0:
        raise ValueError("step must be positive")
    steps, dt, times = _grid(problem.horizon, step)
    noise_dim = problem.noise_dim or problem.dimension
    if brownian is None:
        brownian = BrownianGrid(problem.horizon, steps, noise_dim, seed)
    if brownian.steps != steps:
        raise ValueError("Brownian grid resolution does not match the step")
    init = problem.initial
    if callable(init):
        init_rng = np.random.Generator(np.random.Philox(key=[int(seed), 11]))
        init = init(init_rng)
    y = np.asarray(init, dtype=float).copy()
    values = np.empty((steps + 1, problem.dimension))
    values[0] = y
    dw = brownian.increments()
    for i in range(steps):
        t = times[i]
        drift = np.asarray(problem.drift(t, y))
        diff = np.asarray(problem.diffusion(t, y))
        y = y + drift * dt + diff @ dw[i]
        if not np.all(np.isfinite(y)):
            raise DivergedError("diverged: non-finite SDE state at t=%g" % t)
        values[i + 1] = y
    return Path(times=times, values=values, step=dt)


def sup_distance_to_path(event_times, event_values, initial_value, ode_path, horizon):
    """Sup over t of |step path - smooth path| for one cadlag trajectory.

    The step path is constant between events, so the supremum over each
    inter-event interval is attained at its endpoints; the smooth path is
    evaluated there by linear interpolation on its integration grid.
    """
    knots = np.concatenate([[0.0], np.asarray(event_times), [horizon]])
    vals = np.concatenate([[initial_value], np.asarray(event_values)])
    smooth = np.interp(knots, ode_path.times, ode_path.values[:, 0])
    left = np.abs(vals - smooth[:-1])
    right = np.abs(vals - smooth[1:])
    return float(max(left.max(), right.max()))


def rate_comparison(spec_family, limit, ns, horizon, seeds, observable, simulate):
    """Per-n sup-distance statistics between finite markets and an ODE limit.

    ``simulate(spec, horizon, seed)`` runs the finite model; ``observable``
    maps its result to (event_times, values, initial_value) in the limit's
    coordinate.  Returns per-n distance arrays, their maxima, and the log-log
    regression slope of max distance against n.
    """
    ode_path = integrate_ode(limit, step=min(1e-2, horizon / 100.0))
    result = {"ns": list(ns), "distances": {}, "max_distance": []}
    for n in ns:
        spec = spec_family(n)
        dists = []
        for seed in seeds:
            out = simulate(spec, horizon, seed)
            times, values, v0 = observable(out)
            dists.append(sup_distance_to_path(times, values, v0, ode_path, horizon))
        result["distances"][n] = np.array(dists)
        result["max_distance"].append(max(dists))
    # regress over every (n, seed) point; a per-n max alone is a noisy
    # extreme statistic for slope estimation
    logs_n = np.concatenate([np.full(len(seeds), math.log(n)) for n in ns])
    logs_d = np.log(np.maximum(np.concatenate([result["distances"][n] for n in ns]), 1e-15))
    slope, intercept = np.polyfit(logs_n, logs_d, 1)
    result["slope"] = float(slope)
    result["intercept"] = float(intercept)
    return result
