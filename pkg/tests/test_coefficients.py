import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herdmarket import (
    AgentBehavior,
    LuxExtendedParams,
    LuxPureParams,
    ModelSpec,
    MomentsUnavailableError,
    PricingRule,
    ScalingExponents,
    SignalLaw,
    StateSpace,
    build_extended,
    build_pure,
    coefficient_convergence_check,
    finite_coefficients,
    limit_coefficients,
    monte_carlo_moment_check,
)
from herdmarket.lux import (
    extended_embed,
    extended_reduce_b,
    pure_embed,
    pure_family,
    pure_reduce_b,
)


def extended_family(beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0, shift=0):
    def family(n):
        return build_extended(
            LuxExtendedParams(
                n=n, k_n=n // 5 + shift, beta=beta, gamma1=gamma1, gamma2=gamma2,
                alpha=alpha, lambda_bar=lambda_bar,
            )
        )

    return family


class TestFiniteCoefficients:
    def test_extended_demand_closed_form(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        spec = build_extended(params)
        coeff = finite_coefficients(spec)
        for x, vbar in [(48.0, 0.0), (50.0, 0.3), (52.0, -0.5)]:
            v = extended_embed(0.2)(100, vbar)
            target = params.lambda_bar * (
                (1 - 0.2) * params.w1 * vbar + 0.2 * (params.F - x)
            )
            assert coeff.z(x, v) == pytest.approx(target, abs=1e-12)

    def test_no_trading_means_no_volume(self):
        spec = build_pure(LuxPureParams(n=50, beta=0.2, gamma=0.8))
        coeff = finite_coefficients(spec)
        for vbar in (-0.5, 0.0, 0.7):
            v = pure_embed(50, vbar)
            assert coeff.z(0.0, v) == 0.0
            assert coeff.sigma(0.0, v) == 0.0

    def test_pure_opinion_drift_closed_form(self):
        beta, gamma = 0.3, 0.8
        spec = build_pure(LuxPureParams(n=40, beta=beta, gamma=gamma))
        coeff = finite_coefficients(spec)
        for vbar in np.linspace(-0.9, 0.9, 7):
            v = pure_embed(40, vbar)
            b = coeff.b(0.0, v)
            target = beta * (math.tanh(gamma * vbar) - vbar) * math.cosh(gamma * vbar)
            assert b[1] == pytest.approx(target, abs=1e-12)
            assert b[0] == pytest.approx(-target, abs=1e-12)

    def test_c2_symmetry_and_sign(self):
        spec = build_pure(LuxPureParams(n=40, beta=0.3, gamma=0.8))
        coeff = finite_coefficients(spec)
        mat = np.asarray(coeff.c2(0.0, pure_embed(40, 0.4)))
        assert np.allclose(mat, mat.T)
        assert np.all(np.diag(mat) >= 0.0)
        assert mat[0, 1] <= 0.0  # the mixed second moment is signed negative

    def test_monte_carlo_fallback(self):
        demand = lambda x, v, xi, st: xi
        b = AgentBehavior(
            trading_intensity=lambda x, v: 1.0,
            transition_rate=lambda x, v: 1.0,
            transition_matrix=lambda x, v: np.array([[0.8, 0.2], [0.2, 0.8]]),
            excess_demand=demand,
        )
        spec = ModelSpec(
            states=StateSpace(labels=("a", "b")),
            n=16,
            scaling=ScalingExponents(d1=1.0, d2=0.5),
            behaviors=[b, b],
            pricing=PricingRule(alpha=1.0),
            signals=SignalLaw(
                sampler=lambda rng, size=None: rng.standard_normal(size) * 0.2,
                mean=0.0,
                variance=0.04,
            ),
            initial_price_law=lambda rng: 0.0,
            initial_state_law=lambda rng: np.array([8, 8]),
        )
        coeff = finite_coefficients(spec, mc_samples=200000, mc_seed=0)
        # demand mean 0, second moment Var = 0.04
        assert abs(coeff.z(0.0, np.array([0.5, 0.5]))) < 5e-3
        sigma = coeff.sigma(0.0, np.array([0.5, 0.5]))
        exact = 16 ** (-0.5) * math.sqrt(16 * 0.04)
        assert sigma == pytest.approx(exact, rel=0.02)
        # same spec + seed is deterministic
        coeff2 = finite_coefficients(spec, mc_samples=200000, mc_seed=0)
        assert coeff.z(0.0, np.array([0.5, 0.5])) == coeff2.z(0.0, np.array([0.5, 0.5]))

    def test_missing_moments_rejected(self):
        b = AgentBehavior(
            trading_intensity=lambda x, v: 1.0,
            transition_rate=lambda x, v: 1.0,
            transition_matrix=lambda x, v: np.eye(2),
            excess_demand=lambda x, v, xi, st: xi,
        )
        spec = ModelSpec(
            states=StateSpace(labels=("a", "b")),
            n=4,
            scaling=ScalingExponents(d1=1.0, d2=0.5),
            behaviors=[b, b],
            pricing=PricingRule(alpha=1.0),
            signals=None,
            initial_price_law=lambda rng: 0.0,
            initial_state_law=lambda rng: np.array([2, 2]),
        )
        with pytest.raises(MomentsUnavailableError):
            finite_coefficients(spec)

    def test_heterogeneous_rejected(self):
        b = AgentBehavior(
            trading_intensity=lambda x, v: 1.0,
            transition_rate=lambda x, v: 1.0,
            transition_matrix=lambda x, v: np.eye(2),
            excess_demand=lambda x, v, xi, st: 0.0,
        )
        spec = ModelSpec(
            states=StateSpace(labels=("a", "b")),
            n=2,
            scaling=ScalingExponents(d1=1.0, d2=0.5),
            behaviors=[b, b],
            pricing=PricingRule(alpha=1.0),
            signals=SignalLaw(sampler=lambda rng, size=None: 0.0, mean=0.0, variance=0.0),
            initial_price_law=lambda rng: 0.0,
            initial_state_law=lambda rng: np.array([0, 1]),
            heterogeneous=True,
        )
        with pytest.raises(ValueError):
            finite_coefficients(spec)


class TestLimitCoefficients:
    def test_pure_drift_zero_at_origin(self):
        lim = limit_coefficients("lux-pure", LuxPureParams(n=2, beta=0.3, gamma=0.8))
        assert lim.b(0.0, 0.0) == 0.0

    def test_pure_drift_odd(self):
        lim = limit_coefficients("lux-pure", LuxPureParams(n=2, beta=0.3, gamma=1.2))
        for vbar in np.linspace(0.0, 0.95, 9):
            assert lim.b(0.0, vbar) == pytest.approx(-lim.b(0.0, -vbar), abs=1e-14)

    def test_extended_equilibrium_at_fundamental(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        lim = limit_coefficients("lux-extended", params)
        assert lim.z(50.0, 0.0) == 0.0
        assert lim.b(50.0, 0.0) == 0.0

    def test_extended_price_diffusion(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=1.0,
            lambda_bar=1.0, signal_std=0.2,
        )
        lim = limit_coefficients("lux-extended", params)
        assert lim.sigma(48.0, 0.3) == pytest.approx(0.2, abs=1e-15)

    def test_extended_drift_antisymmetry(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        lim = limit_coefficients("lux-extended", params)
        F = params.F
        for vbar, dx in [(0.3, 1.0), (-0.5, 2.5), (0.8, -0.7)]:
            assert lim.b(F + dx, vbar) == pytest.approx(-lim.b(F - dx, -vbar), abs=1e-13)
            assert lim.z(F + dx, vbar) == pytest.approx(-lim.z(F - dx, -vbar), abs=1e-13)

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            limit_coefficients("unknown", None)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            LuxPureParams(n=2, beta=0.5, gamma=1.0)  # beta >= e^{-gamma}


class TestConvergence:
    def test_pure_drift_gap_exactly_zero(self):
        family = pure_family(0.3, 0.8)
        lim = limit_coefficients("lux-pure", LuxPureParams(n=2, beta=0.3, gamma=0.8))
        grid = [(0.0, vbar) for vbar in (-0.8, -0.2, 0.0, 0.4, 0.9)]
        report = coefficient_convergence_check(
            family, lim, grid, ns=[10, 40, 160], embed=pure_embed, reduce_b=pure_reduce_b
        )
        # the reduced drift is n-independent: gaps identical across n and at
        # float-rounding level
        gaps = report["gaps"]["b"]
        assert max(gaps) < 1e-14
        assert gaps[0] == gaps[1] == gaps[2]
        assert report["flags"] == []

    def test_pure_c2_bound(self):
        family = pure_family(0.3, 0.8)
        for n in (10, 100, 1000):
            coeff = finite_coefficients(family(n))
            for vbar in (-0.9, 0.0, 0.5):
                mat = np.asarray(coeff.c2(0.0, pure_embed(n, vbar)))
                assert float(np.max(np.abs(mat))) <= 2.0 / n + 1e-15

    def test_extended_z_gap_linear_in_phi_gap(self):
        # k_n = n/5 + 2 keeps parity and gives phi_n - phi = 2/n exactly
        phi = 0.2
        lim = limit_coefficients(
            "lux-extended",
            LuxExtendedParams(
                n=10, k_n=2, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
            ),
        )
        grid = [(48.0, -0.5), (50.0, 0.0), (51.0, 0.7)]
        gaps = []
        for n in (100, 400, 1600):
            spec = extended_family(shift=2)(n)
            coeff = finite_coefficients(spec)
            g = max(
                abs(coeff.z(x, extended_embed((n // 5 + 2) / n)(n, vb)) - lim.z(x, vb))
                for x, vb in grid
            )
            gaps.append(g)
        assert gaps[0] == pytest.approx(4.0 * gaps[1], rel=0.05)
        assert gaps[1] == pytest.approx(4.0 * gaps[2], rel=0.05)

    def test_growing_gap_flagged(self):
        family = pure_family(0.3, 0.8)
        lim = limit_coefficients("lux-pure", LuxPureParams(n=2, beta=0.3, gamma=0.8))
        grid = [(0.0, 0.5)]
        bad = lambda bvec: bvec[1] - bvec[0] + 1.0  # wrong reduction, constant offset
        report = coefficient_convergence_check(
            family, lim, grid, ns=[10, 40], embed=pure_embed, reduce_b=bad
        )
        assert any("b" in f for f in report["flags"])


class TestMonteCarloMoments:
    def test_identities_within_errors(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        spec = build_extended(params)
        embed = extended_embed(0.2)
        points = [(48.0, embed(100, 0.0)), (50.5, embed(100, 0.3))]
        u = np.array([-1.0 / 0.8, 1.0 / 0.8, 0.0])
        reports = monte_carlo_moment_check(spec, points, n_samples=10 ** 5, seed=0, reduction=u)
        for rep in reports:
            assert abs(rep["dP_mean"] - rep["dP_target"]) < 5.0 * rep["dP_se"]
            assert abs(rep["dU_mean"] - rep["dU_target"]) < 5.0 * rep["dU_se"]
            assert abs(rep["dU2_mean"] - rep["dU2_target"]) < 5.0 * rep["dU2_se"]

    def test_inconsistent_grid_point_rejected(self):
        params = LuxExtendedParams(
            n=100, k_n=20, beta=0.12, gamma1=0.2, gamma2=1.2, alpha=8.0, lambda_bar=4.0
        )
        spec = build_extended(params)
        with pytest.raises(ValueError):
            monte_carlo_moment_check(spec, [(50.0, np.array([0.4, 0.41, 0.2]))], n_samples=10)
