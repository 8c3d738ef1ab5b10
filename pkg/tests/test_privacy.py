"""Tests for Laplace sampling, composition accounting and the round-count planners."""

import math

import numpy as np
import pytest

from privateequilibria.src.exceptions import ContractError
from privateequilibria.src.privacy import (
    Infeasible,
    PrivacyBudget,
    PrivacyLedger,
    alpha_median,
    compose_advanced,
    concentration_bound,
    eta_shape,
    laplace_noise,
    laplace_sample,
    largest_feasible_T,
    median_hard_cap,
    median_target_T,
    nrlaplace_plan_for_T,
    nrlaplace_sigma,
    per_step_epsilon,
    plan_for_nrlaplace,
    plan_for_nrmedian,
    predicted_alpha_laplace,
)

# ===========================================================================
# 1. Laplace sampling
# ===========================================================================


class TestLaplace:
    def test_moments(self):
        draws = laplace_noise(2.0, 200_000, np.random.default_rng(0))
        assert draws.mean() == pytest.approx(0.0, abs=0.05)
        assert np.abs(draws).mean() == pytest.approx(2.0, rel=0.02)
        assert draws.var() == pytest.approx(8.0, rel=0.05)

    def test_zero_scale_is_exact_and_consumes_nothing(self):
        rng = np.random.default_rng(1)
        assert laplace_noise(0.0, 3, rng).tolist() == [0.0, 0.0, 0.0]
        assert rng.random() == np.random.default_rng(1).random()

    def test_negative_scale(self):
        with pytest.raises(ContractError):
            laplace_sample(-1.0, np.random.default_rng(0))

    def test_same_stream_same_draw(self):
        assert laplace_sample(1.0, np.random.default_rng([3, 4])) == laplace_sample(1.0, np.random.default_rng([3, 4]))


# ===========================================================================
# 2. Composition
# ===========================================================================


class TestComposition:
    def test_advanced_composition_formula(self):
        eps, delta = compose_advanced(0.1, 1e-7, 10, 1e-5)
        expected = 0.1 * math.sqrt(20 * math.log(1e5)) + 10 * 0.1 * math.expm1(0.1)
        assert eps == pytest.approx(expected)
        assert delta == pytest.approx(10 * 1e-7 + 1e-5)

    def test_composition_grows_with_rounds(self):
        totals = [compose_advanced(0.05, 1e-8, T, 1e-6) for T in (1, 2, 10, 100, 1000)]
        for (eps_a, delta_a), (eps_b, delta_b) in zip(totals, totals[1:]):
            assert eps_b > eps_a
            assert delta_b > delta_a

    def test_composition_grows_with_step_epsilon(self):
        epsilons = [compose_advanced(eps0, 0.0, 50, 1e-6)[0] for eps0 in (0.0, 0.001, 0.01, 0.1, 1.0)]
        assert epsilons[0] == 0.0
        assert all(b > a for a, b in zip(epsilons, epsilons[1:]))

    def test_composition_slack_trades_epsilon_for_delta(self):
        loose, tight = compose_advanced(0.1, 0.0, 20, 1e-3), compose_advanced(0.1, 0.0, 20, 1e-9)
        assert tight[0] > loose[0]
        assert tight[1] < loose[1]

    def test_per_step_epsilon(self):
        assert per_step_epsilon(1.0, 1e-6, 50) == pytest.approx(1.0 / math.sqrt(400 * math.log(1e6)))

    def test_concentration_bound_domain(self):
        assert concentration_bound(1.0, 60, 0.5) == pytest.approx(math.exp(-2.5))
        with pytest.raises(ContractError):
            concentration_bound(1.0, 10, 2.0)

    def test_budget_contract(self):
        with pytest.raises(ContractError):
            PrivacyBudget(0.0, 1e-6)
        with pytest.raises(ContractError):
            PrivacyBudget(1.0, 1.0)
        assert PrivacyBudget(0.5, 1e-6).simplified_rule_applies

    def test_ledger_certifies_the_target(self):
        draws = 4000
        ledger = PrivacyLedger(per_step_epsilon(1.0, 1e-6, draws), 1e-6)
        ledger.record(draws)
        eps, delta = ledger.certified()
        assert eps == pytest.approx(1.0)
        assert delta == 1e-6
        assert ledger.composed()[0] <= 1.0
        assert ledger.to_dict()["draws"] == draws

    def test_empty_ledger(self):
        assert PrivacyLedger(0.1, 1e-6).composed() == (0.0, 0.0)


# ===========================================================================
# 3. NRLaplace planner
# ===========================================================================


class TestLaplacePlanner:
    def test_largest_feasible_T(self):
        assert largest_feasible_T(lambda T: 37 - T, 1000) == 37
        assert largest_feasible_T(lambda T: 1.0, 1000) == 1000
        assert largest_feasible_T(lambda T: -1.0, 1000) is None

    def test_plan_is_the_largest_feasible_T(self):
        args = dict(n=1000, k=2, gamma=1e-6, epsilon=1.0, delta=1e-6, beta=0.05)
        plan = plan_for_nrlaplace(**args)
        assert plan.feasible
        assert plan.satisfies_constraint
        assert plan.T > 100
        assert not nrlaplace_plan_for_T(T=plan.T + 1, **args).satisfies_constraint
        assert plan.sigma == pytest.approx(nrlaplace_sigma(1000, 2, 1e-6, 1.0, 1e-6, plan.T))
        assert plan.steps == 1000 * 2 * plan.T

    def test_per_step_epsilon_matches_simplified_rule(self):
        plan = plan_for_nrlaplace(1000, 2, 1e-6, 1.0, 1e-6, 0.05)
        assert plan.per_step_epsilon == pytest.approx(per_step_epsilon(1.0, 1e-6, plan.steps))

    def test_desk_scale_is_infeasible(self):
        # n = 200 beach/mountain players: sigma at T = 1 is already far above the threshold
        result = plan_for_nrlaplace(200, 2, 1 / 199, 1.0, 1e-6, 0.05)
        assert isinstance(result, Infeasible)
        assert result.T == 1
        assert result.lhs == pytest.approx(1.0566, abs=1e-3)
        assert result.rhs == pytest.approx(0.0161, abs=1e-3)
        assert result.to_dict()["status"] == "infeasible"
        assert "infeasible" in result.message()

    def test_nonpositive_epsilon_is_infeasible(self):
        result = plan_for_nrlaplace(10, 2, 0.1, 0.0, 1e-6, 0.05)
        assert isinstance(result, Infeasible)
        assert "epsilon" in result.reason

    def test_cap_is_reported(self):
        plan = plan_for_nrlaplace(10, 2, 0.0, 1.0, 1e-6, 0.05, T_cap=500)
        assert plan.T == 500
        assert plan.capped

    def test_predicted_alpha_decreases_in_T(self):
        a = predicted_alpha_laplace(100, 2, 0.01, 1.0, 1e-6, 0.05, 10)
        b = predicted_alpha_laplace(100, 2, 0.01, 1.0, 1e-6, 0.05, 1000)
        assert b < a


# ===========================================================================
# 4. NRMedian planner and shape
# ===========================================================================


class TestMedianPlanner:
    def test_hard_cap(self):
        assert median_hard_cap(4, 2) == math.floor(80 * math.log(2)) + 1

    def test_target_T(self):
        assert median_target_T(100, 2, 0.01, 10**6) == 400
        assert median_target_T(100, 2, 0.0, 777) == 777

    def test_plan_respects_constraint_and_cap(self):
        plan = plan_for_nrmedian(4, 2, 2, 1e-5, 1.0, 1e-6, 0.05, T_cap=5000)
        assert plan.feasible
        assert plan.T == 5000
        assert plan.capped
        assert plan.alpha_mm == pytest.approx(alpha_median(4, 2, 2, 5000, 1e-5, 1.0, 1e-6, 0.05))
        assert plan.satisfies_constraint

    def test_infeasible_median(self):
        result = plan_for_nrmedian(4, 2, 2, 0.5, 1.0, 1e-6, 0.05)
        assert isinstance(result, Infeasible)
        assert result.rhs == pytest.approx(1 / 6)

    def test_eta_shape(self):
        assert eta_shape(16, 2, 1 / 16) == pytest.approx(0.25 * 2 * 2**0.75)
