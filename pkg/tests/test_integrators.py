import math

import numpy as np
import pytest

from herdmarket import (
    BrownianGrid,
    DivergedError,
    LuxExtendedParams,
    LuxPureParams,
    OdeProblem,
    SdeProblem,
    integrate_ode,
    integrate_sde,
    rate_comparison,
    simulate_pure,
    sup_distance_to_path,
    tanh_fixed_point,
)
from herdmarket.lux import (
    build_pure,
    extended_limit_ode,
    extended_limit_sde,
    pure_limit_ode,
)

PURE = LuxPureParams(n=100, beta=0.3, gamma=0.8)
PURE_SUPER = LuxPureParams(n=100, beta=0.3, gamma=1.2)


class TestOdeIntegrator:
    def test_subcritical_fan_collapses(self):
        for v0 in np.linspace(-0.9, 0.9, 9):
            path = integrate_ode(pure_limit_ode(PURE, v0, 100.0), step=0.01)
            assert abs(path.terminal()[0]) < 1e-3

    def test_origin_is_fixed(self):
        path = integrate_ode(pure_limit_ode(PURE_SUPER, 0.0, 100.0), step=0.01)
        assert np.all(path.values == 0.0)

    def test_supercritical_limit_point(self):
        fp = tanh_fixed_point(1.2)
        path = integrate_ode(pure_limit_ode(PURE_SUPER, 0.1, 100.0), step=0.01)
        assert abs(path.terminal()[0] - fp) < 1e-6
        path = integrate_ode(pure_limit_ode(PURE_SUPER, -0.1, 100.0), step=0.01)
        assert abs(path.terminal()[0] + fp) < 1e-6

    def test_fourth_order(self):
        # step halving shrinks the terminal error by 16 for a smooth field;
        # compare against a much finer reference
        prob = pure_limit_ode(PURE_SUPER, 0.3, 2.0)
        ref = integrate_ode(prob, step=1e-4).terminal()[0]
        e1 = abs(integrate_ode(prob, step=0.2).terminal()[0] - ref)
        e2 = abs(integrate_ode(prob, step=0.1).terminal()[0] - ref)
        assert 8.0 <= e1 / e2 <= 32.0

    def test_monotone_solutions(self):
        for params in (PURE, PURE_SUPER):
            for v0 in (-0.7, -0.2, 0.4, 0.9):
                path = integrate_ode(pure_limit_ode(params, v0, 50.0), step=0.01)
                diffs = np.diff(path.values[:, 0])
                assert np.all(diffs >= 0.0) or np.all(diffs <= 0.0)

    def test_lattice_confinement(self):
        for v0 in (-0.999, 0.999):
            path = integrate_ode(pure_limit_ode(PURE_SUPER, v0, 50.0), step=0.01)
            max_rhs = 2.0 * 0.3 * 2.0 * math.cosh(1.2)
            assert np.all(np.abs(path.values[:, 0]) <= 1.0 + 0.01 * max_rhs)

    def test_grid_snaps_to_horizon(self):
        path = integrate_ode(pure_limit_ode(PURE, 0.5, 1.0), step=0.3)
        assert path.times[-1] == 1.0
        assert len(path.times) == 5  # ceil(1/0.3) = 4 steps

    def test_divergence_detected(self):
        prob = OdeProblem(
            dimension=1, rhs=lambda t, y: np.array([float("nan")]), initial=[2.0], horizon=10.0
        )
        with pytest.raises(DivergedError):
            integrate_ode(prob, step=0.5)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            integrate_ode(pure_limit_ode(PURE, 0.5, 1.0), step=0.0)
        with pytest.raises(ValueError):
            OdeProblem(dimension=0, rhs=lambda t, y: y, initial=[], horizon=1.0)
        with pytest.raises(ValueError):
            OdeProblem(dimension=1, rhs=lambda t, y: y, initial=[0.0], horizon=-1.0)


class TestBrownianGrid:
    def test_refine_keeps_coarse_points(self):
        grid = BrownianGrid(horizon=1.0, steps=8, noise_dim=2, seed=4)
        coarse = grid.w.copy()
        grid.refine()
        assert np.array_equal(grid.w[0::2], coarse)
        assert grid.steps == 16

    def test_increment_variance(self):
        grid = BrownianGrid(horizon=1.0, steps=20000, noise_dim=1, seed=0)
        incs = grid.increments()
        assert np.var(incs) == pytest.approx(1.0 / 20000, rel=0.05)

    def test_seed_determinism(self):
        a = BrownianGrid(1.0, 16, 1, seed=9).w
        b = BrownianGrid(1.0, 16, 1, seed=9).w
        assert np.array_equal(a, b)


class TestSdeIntegrator:
    def test_zero_drift_variance_slope(self):
        sigma_hat = 0.7
        prob = SdeProblem(
            dimension=1,
            drift=lambda t, y: np.zeros(1),
            diffusion=lambda t, y: np.array([[sigma_hat]]),
            initial=[0.0],
            horizon=1.0,
            noise_dim=1,
        )
        terminals = np.empty(10 ** 4)
        for seed in range(10 ** 4):
            terminals[seed] = integrate_sde(prob, step=0.25, seed=seed).terminal()[0]
        slope = np.var(terminals) / 1.0
        assert slope == pytest.approx(sigma_hat ** 2, rel=0.05)

    def test_noise_free_matches_ode(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0,
            lambda_bar=4.0, signal_std=0.0, initial_price=48.0,
        )
        sde = integrate_sde(extended_limit_sde(params, 50.0), step=0.01, seed=0)
        ode = integrate_ode(extended_limit_ode(params, [48.0, 0.0], 50.0), step=0.01)
        gap_1 = float(np.max(np.abs(sde.values - ode.values)))
        sde_h = integrate_sde(extended_limit_sde(params, 50.0), step=0.005, seed=0)
        gap_2 = float(np.max(np.abs(sde_h.values[::2] - ode.values)))
        assert gap_1 < 0.05
        assert gap_2 < 0.75 * gap_1  # first-order decay in the step

    def test_strong_order_with_shared_path(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0,
            lambda_bar=4.0, initial_price=48.0,
        )
        prob = extended_limit_sde(params, 10.0)
        grid = BrownianGrid(10.0, 200, 1, seed=6)
        coarse = integrate_sde(prob, step=0.05, brownian=grid)
        grid.refine()
        fine = integrate_sde(prob, step=0.025, brownian=grid)
        grid.refine()
        finer = integrate_sde(prob, step=0.0125, brownian=grid)
        d1 = abs(coarse.terminal()[0] - fine.terminal()[0])
        d2 = abs(fine.terminal()[0] - finer.terminal()[0])
        # additive noise makes Euler strong order 1; demand at least order 1/2
        assert d2 < d1 / math.sqrt(2.0) + 1e-12

    def test_single_stable_time_average(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=0.8, alpha=8.0,
            lambda_bar=4.0, initial_price=48.0,
        )
        path = integrate_sde(extended_limit_sde(params, 1000.0), step=0.01, seed=0)
        tail = path.values[path.times >= 500.0, 0]
        assert abs(float(tail.mean()) - 50.0) < 0.5

    def test_seed_determinism(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        prob = extended_limit_sde(params, 5.0)
        a = integrate_sde(prob, step=0.01, seed=12)
        b = integrate_sde(prob, step=0.01, seed=12)
        assert np.array_equal(a.values, b.values)

    def test_callable_initial_sampler(self):
        prob = SdeProblem(
            dimension=1,
            drift=lambda t, y: np.zeros(1),
            diffusion=lambda t, y: np.array([[1.0]]),
            initial=lambda rng: np.array([rng.normal()]),
            horizon=1.0,
            noise_dim=1,
        )
        a = integrate_sde(prob, step=0.5, seed=3)
        b = integrate_sde(prob, step=0.5, seed=3)
        assert a.values[0, 0] == b.values[0, 0]
        c = integrate_sde(prob, step=0.5, seed=4)
        assert c.values[0, 0] != a.values[0, 0]


class TestSupDistance:
    def test_exact_for_constant_limit(self):
        flat = integrate_ode(
            OdeProblem(dimension=1, rhs=lambda t, y: np.zeros(1), initial=[0.0], horizon=1.0),
            step=0.1,
        )
        d = sup_distance_to_path([0.4, 0.8], [0.2, -0.3], 0.0, flat, 1.0)
        assert d == 0.3

    def test_includes_initial_gap(self):
        flat = integrate_ode(
            OdeProblem(dimension=1, rhs=lambda t, y: np.zeros(1), initial=[1.0], horizon=1.0),
            step=0.1,
        )
        d = sup_distance_to_path([0.9], [0.95], 0.5, flat, 1.0)
        assert d == 0.5  # the t=0 gap dominates


class TestRateComparison:
    def test_slope_and_bound(self):
        horizon, v0 = 0.15, 0.5
        family = lambda n: LuxPureParams(n=n, beta=0.3, gamma=0.8, initial_vbar=v0)
        limit = pure_limit_ode(PURE, v0, horizon)
        out = rate_comparison(
            family, limit, ns=[100, 400, 1600], horizon=horizon, seeds=range(20),
            observable=lambda p: (p.times, p.vbar, p.initial_vbar),
            simulate=simulate_pure,
        )
        assert -0.65 <= out["slope"] <= -0.35
        const = 2.0 * math.sqrt(0.3) * 1.2941664123  # root of 1 = y tanh(0.8 y)
        for n, mx in zip(out["ns"], out["max_distance"]):
            assert mx <= const / math.sqrt(n)

    def test_large_n_single_seed(self):
        n = 10 ** 6
        params = LuxPureParams(n=n, beta=0.3, gamma=0.8, initial_vbar=0.5)
        path = simulate_pure(params, 0.15, 0)
        limit = integrate_ode(pure_limit_ode(params, 0.5, 0.15), step=1e-3)
        d = sup_distance_to_path(path.times, path.vbar, path.initial_vbar, limit, 0.15)
        assert d < 0.05
