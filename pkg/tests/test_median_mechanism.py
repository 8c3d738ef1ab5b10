"""Tests for NRMedian: the candidate net, the median answer rule and desk-scale runs."""

import numpy as np
import pytest

from privateequilibria.games.random_utility.random_utility_game import RandomAggregativeGame
from privateequilibria.mechanisms import median_mechanism
from privateequilibria.mechanisms.median_mechanism import (
    CandidateNet,
    MedianCalibration,
    MedianState,
    SharedLossTable,
    learner_losses,
    median_answer,
    query_value,
    run_nrmedian,
)
from privateequilibria.src.base_mechanism import STATUS_MEDIAN_FAILURE, STATUS_OK
from privateequilibria.src.base_verifier import verify
from privateequilibria.src.exceptions import ContractError, MedianFailure
from privateequilibria.src.privacy import Infeasible, PrivacyBudget

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _make_calibration(hard_cap: int = 5, tau_keep: float = 0.01, tau_hard: float = 0.02) -> MedianCalibration:
    """Noise-free calibration so the answer rule is deterministic."""
    return MedianCalibration(
        hard_cap=hard_cap,
        epsilon_hard=1.0,
        queries=1,
        sigma_threshold=0.0,
        sigma_compare=0.0,
        sigma_answer=0.0,
        tau_keep=tau_keep,
        margin=0.0,
        tau_hard=tau_hard,
    )


def _make_game() -> RandomAggregativeGame:
    return RandomAggregativeGame.from_config(n=4, k=2, U=2, coupling=0.5, seed=42)


def _make_run(T: int = 4, seed: int = 0):
    return run_nrmedian(_make_game(), PrivacyBudget(1e6, 1e-6), beta=0.05, seed=seed, T=T)


# ===========================================================================
# 1. Candidate net and shared table
# ===========================================================================


class TestCandidateNet:
    def test_enumerates_every_type_tuple(self):
        net = CandidateNet.enumerate(("a", "b", "c"), 3)
        assert net.size == 27
        assert net.live_count == 27
        assert net.index_of(net.encode(("b", "a", "c"))) == 1 * 9 + 0 * 3 + 2
        np.testing.assert_array_equal(net.candidates[net.index_of((2, 2, 1))], [2, 2, 1])

    def test_unknown_type(self):
        with pytest.raises(ContractError):
            CandidateNet.enumerate(("a", "b"), 2).encode(("a", "z"))

    def test_table_rounds_complete_in_order(self):
        table = SharedLossTable.empty(3, 2, 2, ("a", "b"))
        with pytest.raises(ContractError):
            table.complete_round(0)
        table.answers[0] = 0.5
        table.complete_round(0)
        assert table.history(1).shape == (1, 2, 2, 2)
        with pytest.raises(ContractError):
            table.history(2)

    def test_learner_scale(self):
        assert learner_losses([-1.0, 0.5, 2.0, 5.0]).tolist() == pytest.approx([0.0, 0.5, 1.0, 1.0])


# ===========================================================================
# 2. Median answer rule
# ===========================================================================


class TestMedianAnswer:
    def test_unanimous_candidates_are_easy(self):
        net = CandidateNet.enumerate(("a", "b"), 1)
        state = MedianState(_make_calibration())
        answer, hard = median_answer(net, np.array([0.3, 0.3]), 0.3, state, np.random.default_rng(0))
        assert (answer, hard) == (0.3, False)
        assert state.easy == 1

    def test_close_median_is_easy(self):
        net = CandidateNet.enumerate(("a", "b"), 2)
        state = MedianState(_make_calibration())
        answer, hard = median_answer(net, np.array([0.2, 0.5, 0.5, 0.9]), 0.505, state, np.random.default_rng(0))
        assert not hard
        assert answer == pytest.approx(0.5)
        assert net.live_count == 4

    def test_hard_query_prunes_far_candidates(self):
        net = CandidateNet.enumerate(("a", "b"), 2)
        state = MedianState(_make_calibration())
        answer, hard = median_answer(net, np.array([0.0, 0.0, 1.0, 1.0]), 0.0, state, np.random.default_rng(0))
        assert hard
        assert answer == 0.0
        assert net.live.tolist() == [True, True, False, False]
        assert state.hard == 1

    def test_hard_cap_exhaustion(self):
        net = CandidateNet.enumerate(("a", "b"), 2)
        state = MedianState(_make_calibration(hard_cap=0), round_index=3)
        with pytest.raises(MedianFailure) as info:
            median_answer(net, np.array([0.0, 0.0, 1.0, 1.0]), 0.0, state, np.random.default_rng(0))
        assert info.value.round_index == 3

    def test_calibration_splits_budget_over_hard_cap(self):
        cal = MedianCalibration.for_run(4, 2, 2, 10, 0.1, PrivacyBudget(1.0, 1e-6), 0.05)
        assert cal.queries == 4 * 2 * 10 * 2
        assert cal.tau_hard > 2 * cal.tau_keep
        assert cal.answer_bound == pytest.approx(cal.tau_hard + cal.margin)


# ===========================================================================
# 3. Desk-scale runs
# ===========================================================================


class TestRun:
    def test_run_completes_and_stays_accurate(self):
        run = _make_run(T=4)
        assert run.status == STATUS_OK
        assert run.T == 4
        assert run.stats["true_live"]
        assert run.stats["hard"] <= run.stats["hard_cap"]
        assert run.stats["max_answer_error"] <= run.stats["answer_bound"]
        assert run.ledger.draws == run.stats["hard"]

    def test_distribution_uses_pre_update_states(self):
        run = _make_run(T=3)
        for i, sequence in enumerate(run.sequences):
            np.testing.assert_allclose(run.distribution.rounds[:, i, :], sequence.played)

    def test_query_value_matches_recorded_losses(self):
        run = _make_run(T=3)
        game = run.game
        universe = run.params["universe"]
        true_ids = [universe.index(t) for t in game.types]
        for t in range(run.T):
            value = query_value(game, (0, 1, t, true_ids[0]), true_ids, run.table)
            assert value == pytest.approx(run.true_losses[0, t, 1], abs=1e-12)
            answer = run.table.answers[t, 0, 1, true_ids[0]]
            assert abs(answer - value) <= run.stats["answer_bound"]

    def test_reproducible_per_seed(self):
        a, b = _make_run(seed=5), _make_run(seed=5)
        np.testing.assert_array_equal(a.table.answers, b.table.answers)

    def test_verified_accuracy_with_loose_budget(self):
        run = _make_run(T=30)
        certificate = verify(run.distribution, run.game)
        assert certificate.alpha_cce <= run.predicted_alpha

    def test_net_too_large_is_infeasible(self):
        game = RandomAggregativeGame.from_config(n=21, k=2, U=2, coupling=0.5)
        result = run_nrmedian(game, PrivacyBudget(1.0, 1e-6), beta=0.05, T=1)
        assert isinstance(result, Infeasible)

    def test_failure_is_reported_not_raised(self, monkeypatch):
        original = median_mechanism.median_answer

        def failing(net, values, true_value, state, rng):
            if state.round_index == 1:
                raise MedianFailure("forced", state.round_index)
            return original(net, values, true_value, state, rng)

        monkeypatch.setattr(median_mechanism, "median_answer", failing)
        run = _make_run(T=4)
        assert run.status == STATUS_MEDIAN_FAILURE
        assert run.failed
        assert run.failure_round == 1
        assert run.distribution.T == 1
        assert run.sequences[0].T == 1

    def test_monte_carlo_backend_rejected(self):
        with pytest.raises(ContractError):
            run_nrmedian(_make_game(), PrivacyBudget(1.0, 1e-6), beta=0.05, T=1, loss_mode="monte_carlo:10")


# ===========================================================================
# 4. Candidate universe and seeded frequencies
# ===========================================================================


def _make_single_type_game() -> RandomAggregativeGame:
    return RandomAggregativeGame(4, 2, ["t0"] * 4, coupling=0.5, seed=1, type_universe=["t0", "t1"])


class TestCandidateUniverse:
    def test_subset_shrinks_the_net(self):
        game = _make_single_type_game()
        full = run_nrmedian(game, PrivacyBudget(1e6, 1e-6), beta=0.05, T=2)
        narrow = run_nrmedian(game, PrivacyBudget(1e6, 1e-6), beta=0.05, T=2, universe=["t0"])
        assert full.stats["net_size"] == 16
        assert narrow.stats["net_size"] == 1
        assert narrow.params["universe"] == ["t0"]
        assert narrow.true_losses.shape == full.true_losses.shape
        assert narrow.stats["true_live"]

    def test_mechanism_passes_universe(self):
        mechanism = median_mechanism.MedianMechanism(PrivacyBudget(1e6, 1e-6), T=2, universe=["t0"])
        run = mechanism.run(_make_single_type_game(), seed=0)
        assert run.stats["net_size"] == 1

    @pytest.mark.parametrize("universe", [["t2"], ["t0", "t0"], []])
    def test_universe_must_be_a_subset(self, universe):
        with pytest.raises(ContractError):
            run_nrmedian(_make_single_type_game(), PrivacyBudget(1.0, 1e-6), beta=0.05, T=1, universe=universe)

    def test_reported_type_outside_universe(self):
        with pytest.raises(ContractError):
            run_nrmedian(_make_single_type_game(), PrivacyBudget(1.0, 1e-6), beta=0.05, T=1, universe=["t1"])


@pytest.mark.slow
class TestSeededFrequencies:
    SEEDS = range(20)

    def test_true_tuple_never_pruned(self):
        for seed in self.SEEDS:
            run = _make_run(T=4, seed=seed)
            assert run.status == STATUS_OK, seed
            assert run.stats["true_live"], seed

    def test_answers_accurate_on_every_seed(self):
        accurate = 0
        for seed in self.SEEDS:
            run = _make_run(T=4, seed=seed)
            accurate += run.stats["max_answer_error"] <= run.stats["answer_bound"]
        assert accurate == len(self.SEEDS)
