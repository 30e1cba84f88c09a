"""The compiled event loops must be draw-for-draw identical to the generic
engine, not merely statistically equivalent."""

import numpy as np
import pytest

from herdmarket import (
    LuxExtendedParams,
    LuxPureParams,
    build_extended,
    build_pure,
    occupation_histogram,
    simulate_extended,
    simulate_extended_sde,
    simulate_pure,
    simulate_trajectory,
)
from herdmarket.integrators import integrate_sde
from herdmarket.lux import extended_limit_sde


def engine_pure_path(params, horizon, seed):
    spec = build_pure(params)
    traj = simulate_trajectory(spec, horizon, seed)
    times = traj.times()
    copt = np.array(
        [int(round(e.character_after[1] * params.n)) for e in traj.events], dtype=np.int64
    )
    return times, copt


class TestPureEquivalence:
    @pytest.mark.parametrize("seed", [0, 1, 7])
    def test_bit_identical(self, seed):
        params = LuxPureParams(n=100, beta=0.3, gamma=1.2)
        fast = simulate_pure(params, 5.0, seed)
        times, copt = engine_pure_path(params, 5.0, seed)
        assert np.array_equal(fast.times, times)
        assert np.array_equal(fast.counts_opt, copt)

    def test_nonzero_initial(self):
        params = LuxPureParams(n=50, beta=0.2, gamma=0.8, initial_vbar=0.6)
        fast = simulate_pure(params, 3.0, 11)
        times, copt = engine_pure_path(params, 3.0, 11)
        assert np.array_equal(fast.times, times)
        assert np.array_equal(fast.counts_opt, copt)
        assert fast.initial_vbar == pytest.approx(0.6, abs=1e-12)

    def test_opinion_stays_on_lattice(self):
        params = LuxPureParams(n=20, beta=0.2, gamma=0.8)
        path = simulate_pure(params, 50.0, 3)
        assert np.all(path.counts_opt >= 0)
        assert np.all(path.counts_opt <= 20)
        assert np.all(np.abs(path.vbar) <= 1.0)


class TestExtendedEquivalence:
    @pytest.mark.parametrize("seed", [0, 2])
    def test_bit_identical(self, seed):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0,
            lambda_bar=4.0, initial_price=48.0,
        )
        fast = simulate_extended(params, 2.0, seed)
        spec = build_extended(params)
        traj = simulate_trajectory(spec, 2.0, seed)
        assert np.array_equal(fast.times, traj.times())
        price = traj.initial_price
        prices = []
        kinds = []
        for e in traj.events:
            if e.kind == "trade":
                price = e.detail[1]
                kinds.append(0)
            else:
                kinds.append(1)
            prices.append(price)
        assert np.array_equal(fast.prices, np.array(prices))
        assert np.array_equal(fast.kinds, np.array(kinds, dtype=np.int8))
        copt = np.array(
            [int(round(e.character_after[1] * params.n)) for e in traj.events]
        )
        assert np.array_equal(fast.counts_opt, copt)

    def test_custom_w2_falls_back_to_engine(self):
        w2 = lambda F, x: np.tanh(F - x)
        params = LuxExtendedParams(
            n=20, k_n=4, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=1.0, w2=w2
        )
        path = simulate_extended(params, 1.0, 0)
        assert params.kappa is None
        assert len(path.times) > 0
        assert np.all(path.counts_pess + path.counts_opt == 16)

    def test_fundamentalist_count_conserved(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        path = simulate_extended(params, 5.0, 1)
        assert np.all(path.counts_pess + path.counts_opt == 80)


class TestOccupation:
    def test_matches_direct_durations(self):
        # the event-count-driven histogram must equal durations accumulated
        # from the horizon-driven path over the same first K events
        params = LuxPureParams(n=30, beta=0.2, gamma=0.8)
        n_events = 400
        lattice, occ = occupation_histogram(params, n_events, seed=5, burn_in=0.0)
        path = simulate_pure(params, 1000.0, 5)
        assert len(path.times) >= n_events
        # each waiting time is credited to the count holding before the event
        manual = np.zeros(31)
        ts = np.concatenate([[0.0], path.times[:n_events]])
        cs = np.concatenate([[path.initial_counts[1]], path.counts_opt[:n_events]])
        for i in range(n_events):
            manual[cs[i]] += ts[i + 1] - ts[i]
        manual /= manual.sum()
        assert np.allclose(occ, manual, atol=1e-12)

    def test_burn_in_changes_histogram(self):
        params = LuxPureParams(n=30, beta=0.2, gamma=0.8, initial_vbar=1.0)
        _, occ0 = occupation_histogram(params, 2000, seed=0, burn_in=0.0)
        _, occ1 = occupation_histogram(params, 2000, seed=0, burn_in=0.5)
        assert occ0[30] > occ1[30]  # burn-in drops the extreme start

    def test_chunking_invariant(self):
        params = LuxPureParams(n=30, beta=0.2, gamma=0.8)
        _, a = occupation_histogram(params, 3000, seed=2, chunk=250)
        _, b = occupation_histogram(params, 3000, seed=2, chunk=10 ** 6)
        assert np.array_equal(a, b)


class TestSdeKernel:
    def test_matches_generic_integrator(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0,
            lambda_bar=4.0, initial_price=48.0,
        )
        t, x, v = simulate_extended_sde(params, 10.0, 0.01, seed=3, thin=1)
        path = integrate_sde(extended_limit_sde(params, 10.0), step=0.01, seed=3)
        assert np.allclose(x, path.values[:, 0], atol=1e-8)
        assert np.allclose(v, path.values[:, 1], atol=1e-8)

    def test_thinning_keeps_values(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        t1, x1, v1 = simulate_extended_sde(params, 5.0, 0.01, seed=0, thin=1)
        t5, x5, v5 = simulate_extended_sde(params, 5.0, 0.01, seed=0, thin=5)
        assert np.array_equal(x5, x1[::5])
        assert np.array_equal(v5, v1[::5])
