"""Tests for the correlated distribution, the certificate and the non-private reference mechanisms."""

import numpy as np
import pytest

from privateequilibria.games.beach_mountain.beach_mountain_game import BEACH, MOUNTAIN, BeachMountainGame
from privateequilibria.mechanisms import build_mechanism
from privateequilibria.mechanisms.exact_ce_mechanism import ExactCEMechanism, solve_exact_ce
from privateequilibria.mechanisms.naive_majority_mechanism import NaiveMajorityMechanism, majority_action
from privateequilibria.src.base_game import NULL_TYPE
from privateequilibria.src.base_verifier import (
    CorrelatedDistribution,
    resolve_verify_mode,
    sample_profile,
    verify,
)
from privateequilibria.src.exceptions import ContractError, ResourceError

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _make_pure(actions, k: int = 2) -> CorrelatedDistribution:
    """One-round point-mass distribution on the given profile."""
    rounds = np.zeros((1, len(actions), k))
    rounds[0, np.arange(len(actions)), actions] = 1.0
    return CorrelatedDistribution(rounds)


# ===========================================================================
# 1. CorrelatedDistribution
# ===========================================================================


class TestCorrelatedDistribution:
    def test_rejects_non_probability_rows(self):
        with pytest.raises(ContractError):
            CorrelatedDistribution(np.array([[[0.6, 0.6]]]))
        with pytest.raises(ContractError):
            CorrelatedDistribution(np.zeros((2, 2)))

    def test_marginals_respect_weights(self):
        rounds = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        assert CorrelatedDistribution(rounds).marginals().tolist() == [[0.5, 0.5]]
        weighted = CorrelatedDistribution(rounds, weights=[3.0, 1.0])
        assert weighted.marginals().tolist() == pytest.approx([[0.75, 0.25]])

    def test_dict_form_rebuilds(self, tmp_path):
        rounds = np.array([[[0.2, 0.8], [1.0, 0.0]]])
        dist = CorrelatedDistribution(rounds, weights=[1.0])
        path = tmp_path / "dist.json"
        path.write_text(dist.to_json())
        loaded = CorrelatedDistribution.load(str(path))
        np.testing.assert_array_equal(loaded.rounds, dist.rounds)
        assert dist.to_dict()["schema"] == 1

    def test_unknown_schema(self):
        with pytest.raises(ContractError):
            CorrelatedDistribution.from_dict({"schema": 99, "rounds": [[[1.0, 0.0]]]})

    def test_sample_profile_within_support(self):
        dist = _make_pure([0, 1, 1])
        profile = sample_profile(dist, np.random.default_rng(0))
        assert profile == (0, 1, 1)


# ===========================================================================
# 2. Certificates
# ===========================================================================


class TestVerify:
    def test_all_beach_is_an_equilibrium(self):
        game = BeachMountainGame(["beach", "beach", "mountain", "mountain"])
        certificate = verify(_make_pure([BEACH] * 4), game)
        assert certificate.alpha_ce == pytest.approx(0.0, abs=1e-12)
        assert certificate.mode == "anonymous"

    def test_lone_mountaineer_regrets_everything(self):
        game = BeachMountainGame(["beach", "beach", "beach"])
        certificate = verify(_make_pure([MOUNTAIN, BEACH, BEACH]), game)
        assert certificate.fixed_regret[0] == pytest.approx(1.0)
        assert certificate.swap_regret[0] == pytest.approx(1.0)
        assert certificate.fixed_regret[1] == pytest.approx(0.0, abs=1e-12)
        assert certificate.best_swap[0] == (BEACH, BEACH)

    def test_swap_regret_at_least_fixed(self, table_game, rng):
        rounds = rng.random((6, table_game.n, table_game.k))
        dist = CorrelatedDistribution(rounds / rounds.sum(axis=2, keepdims=True))
        certificate = verify(dist, table_game)
        for fixed, swap in zip(certificate.fixed_regret, certificate.swap_regret):
            assert swap >= fixed - 1e-12

    def test_round_order_does_not_matter(self, aggregative_game, rng):
        rounds = rng.random((5, aggregative_game.n, aggregative_game.k))
        dist = CorrelatedDistribution(rounds / rounds.sum(axis=2, keepdims=True))
        a = verify(dist, aggregative_game)
        b = verify(dist.permuted([4, 2, 0, 1, 3]), aggregative_game)
        assert a.swap_regret == pytest.approx(b.swap_regret)

    def test_monte_carlo_agrees_with_exact(self, beach_game, rng):
        rounds = rng.random((3, beach_game.n, 2))
        dist = CorrelatedDistribution(rounds / rounds.sum(axis=2, keepdims=True))
        exact = verify(dist, beach_game, "exact")
        estimate = verify(dist, beach_game, "monte_carlo:4000", seed=3)
        assert estimate.stderr is not None
        for e, m, se in zip(exact.fixed_regret, estimate.fixed_regret, estimate.player_stderr):
            assert abs(e - m) <= 5 * se + 1e-3

    def test_size_mismatch(self, beach_game):
        with pytest.raises(ContractError):
            verify(_make_pure([0, 0]), beach_game)

    def test_exact_mode_resolution(self, beach_game, table_game):
        assert resolve_verify_mode(beach_game, "exact").name == "anonymous"
        assert resolve_verify_mode(table_game, None).name == "exact"
        assert resolve_verify_mode(table_game, "monte_carlo:10").samples == 10


# ===========================================================================
# 3. Non-private reference mechanisms
# ===========================================================================


class TestExactCE:
    def test_solution_is_an_exact_ce(self, table_game):
        dist = solve_exact_ce(table_game)
        assert dist.probabilities.sum() == pytest.approx(1.0)
        assert verify(dist, table_game).alpha_ce <= 1e-6

    def test_mechanism_wraps_solver(self, independent_table_game):
        run = ExactCEMechanism().run(independent_table_game, seed=0)
        assert run.mechanism == "exact_ce"
        assert verify(run.distribution, independent_table_game).alpha_ce <= 1e-6

    def test_too_many_profiles(self):
        with pytest.raises(ResourceError):
            solve_exact_ce(BeachMountainGame(["beach"] * 13))


class TestNaiveMajority:
    def test_minority_preference_wins(self):
        assert majority_action(BeachMountainGame(["beach", "mountain", "mountain"])) == BEACH
        assert majority_action(BeachMountainGame(["beach", "beach", "mountain"])) == MOUNTAIN

    def test_null_reports_are_not_counted(self):
        game = BeachMountainGame(["beach", NULL_TYPE, "mountain", "mountain"])
        assert game.reported_count() == 3
        assert majority_action(game) == BEACH

    def test_point_mass_run(self):
        run = NaiveMajorityMechanism().run(BeachMountainGame(["mountain"] * 3), seed=0)
        assert run.T == 1
        assert run.stats["action"] == BEACH
        np.testing.assert_array_equal(run.distribution.rounds[0, :, BEACH], [1.0, 1.0, 1.0])

    def test_rejects_other_families(self, table_game):
        with pytest.raises(ContractError):
            NaiveMajorityMechanism().run(table_game, seed=0)

    def test_registry(self):
        assert isinstance(build_mechanism("naive_majority"), NaiveMajorityMechanism)
        with pytest.raises(ContractError):
            build_mechanism("oracle")
