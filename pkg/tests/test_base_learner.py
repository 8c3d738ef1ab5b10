"""Tests for the no-regret learners, deviation maps and regret accounting."""

import math

import numpy as np
import pytest

from privateequilibria.src.base_learner import (
    FIXED,
    SWAP,
    DeviationMap,
    LossMatrix,
    NoiseMatrix,
    PlaySequence,
    best_swap_map,
    default_eta,
    hedge_step,
    lambda_loss,
    laplace_tolerance,
    make_learner,
    noise_tolerance_check,
    prefix_regret_trace,
    rescale_losses,
    rho,
    run_learner,
    stationary_distribution,
    unscale_losses,
)
from privateequilibria.src.base_game import MixedStrategy
from privateequilibria.src.exceptions import ContractError

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _make_losses(T: int, k: int, seed: int = 0) -> np.ndarray:
    """Loss rows in [0, 1] with a slight drift so that no action is trivially best."""
    rng = np.random.default_rng(seed)
    drift = np.linspace(0.0, 0.3, T)[:, None] * (np.arange(k) % 2)
    return np.clip(rng.random((T, k)) * 0.7 + drift, 0.0, 1.0)


CORPUS_SHAPES = [(T, k) for T in (256, 1024, 4096) for k in (2, 4, 8)]
CORPUS_SIZE = 500


def _corpus_matrix(index: int) -> np.ndarray:
    """Random and adversarial loss matrices cycling through every corpus shape."""
    T, k = CORPUS_SHAPES[index % len(CORPUS_SHAPES)]
    rng = np.random.default_rng([2024, index])
    kind = (index // len(CORPUS_SHAPES)) % 4
    if kind == 0:
        return rng.random((T, k))
    if kind == 1:
        return (rng.random((T, k)) < 0.5).astype(float)
    if kind == 2:
        # the zero-loss action rotates every `block` rounds
        block = int(rng.integers(1, 16))
        L = np.ones((T, k))
        L[np.arange(T), (np.arange(T) // block) % k] = 0.0
        return L
    # best action flips halfway through
    L = 0.5 + 0.5 * rng.random((T, k))
    L[: T // 2, 0] -= 0.5
    L[T // 2 :, k - 1] -= 0.5
    return L


def _adaptive_play(kind: str, T: int, k: int):
    """Adversary that puts loss 1 on the learner's current most likely action."""
    learner = make_learner(kind, k, T)
    played = np.empty((T, k))
    losses = np.zeros((T, k))
    for t in range(T):
        played[t] = learner.current
        losses[t, int(np.argmax(played[t]))] = 1.0
        learner.update(losses[t])
    return played, losses


# ===========================================================================
# 1. Hedge
# ===========================================================================


class TestHedge:
    def test_default_eta(self):
        assert default_eta(2, 100) == pytest.approx(math.sqrt(2 * math.log(2) / 100))

    def test_default_eta_contract(self):
        with pytest.raises(ContractError):
            default_eta(1, 10)

    def test_single_step_weights(self):
        pi = hedge_step(MixedStrategy.uniform(2), [1.0, 0.0], math.log(2))
        assert pi.probs.tolist() == pytest.approx([1 / 3, 2 / 3])

    def test_loss_outside_unit_interval_rejected(self):
        with pytest.raises(ContractError):
            hedge_step(MixedStrategy.uniform(2), [1.5, 0.0], 0.1)

    def test_fixed_regret_bound(self):
        L = _make_losses(400, 3, seed=1)
        sequence = run_learner(FIXED, L)
        assert rho(sequence, L, FIXED) <= math.sqrt(2 * math.log(3) / 400)

    def test_play_is_causal(self):
        L = _make_losses(5, 2, seed=2)
        sequence = run_learner(FIXED, L)
        assert sequence.T == 5
        assert sequence.played.shape == (5, 2)
        np.testing.assert_allclose(sequence.states[0], [0.5, 0.5])
        step = hedge_step(sequence.states[0], L[0], default_eta(2, 5))
        np.testing.assert_allclose(sequence.states[1], step.probs)


# ===========================================================================
# 2. Swap learner
# ===========================================================================


class TestSwapLearner:
    def test_stationary_of_identical_rows(self):
        q = np.array([0.2, 0.5, 0.3])
        pi, residual = stationary_distribution(np.tile(q, (3, 1)))
        np.testing.assert_allclose(pi, q, atol=1e-12)
        assert residual <= 1e-10

    def test_stationary_of_periodic_chain(self):
        pi, _ = stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-12)

    def test_swap_regret_bound(self):
        T, k = 400, 3
        L = _make_losses(T, k, seed=3)
        sequence = run_learner(SWAP, L)
        assert rho(sequence, L, SWAP) <= k * math.sqrt(2 * math.log(k) / T)

    def test_swap_regret_dominates_fixed(self):
        L = _make_losses(200, 3, seed=4)
        sequence = run_learner(SWAP, L)
        assert rho(sequence, L, SWAP) >= rho(sequence, L, FIXED) - 1e-12

    def test_unknown_learner(self):
        with pytest.raises(ContractError):
            run_learner("greedy", _make_losses(3, 2))


# ===========================================================================
# 3. Deviation maps and regret
# ===========================================================================


class TestDeviationMaps:
    def test_enumerate_all_count(self):
        assert len(list(DeviationMap.enumerate_all(3))) == 27

    def test_identity_has_zero_regret(self):
        L = _make_losses(50, 3, seed=5)
        sequence = run_learner(FIXED, L)
        assert rho(sequence, L, DeviationMap.identity(3)) == pytest.approx(0.0, abs=1e-12)

    def test_constant_maps_give_fixed_regret(self):
        L = _make_losses(80, 3, seed=6)
        sequence = run_learner(SWAP, L)
        best = max(rho(sequence, L, DeviationMap.constant(3, j)) for j in range(3))
        assert best == pytest.approx(rho(sequence, L, FIXED))

    def test_best_swap_map_attains_swap_regret(self):
        L = _make_losses(80, 3, seed=7)
        sequence = run_learner(FIXED, L)
        by_enumeration = max(rho(sequence, L, f) for f in DeviationMap.enumerate_all(3))
        assert rho(sequence, L, best_swap_map(sequence, L)) == pytest.approx(by_enumeration)
        assert rho(sequence, L, SWAP) == pytest.approx(by_enumeration)

    def test_apply_moves_mass(self):
        f = DeviationMap((1, 1, 2))
        assert f.apply(np.array([0.2, 0.3, 0.5])).tolist() == pytest.approx([0.0, 0.5, 0.5])

    def test_invalid_table(self):
        with pytest.raises(ContractError):
            DeviationMap((0, 3, 1))

    def test_prefix_trace_ends_at_totals(self):
        L = _make_losses(60, 2, seed=8)
        sequence = run_learner(SWAP, L)
        lam, fixed, swap = prefix_regret_trace(sequence.played, L)
        assert lam[-1] == pytest.approx(lambda_loss(sequence, L))
        assert fixed[-1] == pytest.approx(rho(sequence, L, FIXED))
        assert swap[-1] == pytest.approx(rho(sequence, L, SWAP))

    def test_play_sequence_must_start_uniform(self):
        with pytest.raises(ContractError):
            PlaySequence(np.array([[1.0, 0.0], [0.5, 0.5]]))


# ===========================================================================
# 4. Rescaling and noise tolerance
# ===========================================================================


class TestNoiseTolerance:
    def test_rescale_round_trip_range(self):
        L = _make_losses(20, 3, seed=9)
        rescaled = rescale_losses(L)
        assert rescaled.min() >= 1 / 3 and rescaled.max() <= 2 / 3
        np.testing.assert_allclose(unscale_losses(rescaled), L, atol=1e-12)

    def test_loss_matrix_kinds(self):
        with pytest.raises(ContractError):
            LossMatrix(np.array([[0.1, 0.9]]), "rescaled")
        noisy = LossMatrix(np.array([[-0.2, 1.3], [0.5, 0.5]]), "noisy")
        assert noisy.escaped_entries == 2
        assert noisy.clamped().rows.tolist() == [[0.0, 1.0], [0.5, 0.5]]

    def test_bounded_noise_escape_rejected(self):
        with pytest.raises(ContractError):
            NoiseMatrix(np.array([[0.5]]), "bounded", 0.1)

    @pytest.mark.parametrize("family", [FIXED, SWAP])
    def test_bounded_noise_shifts_regret_by_at_most_2b(self, family):
        T, k, b = 300, 3, 0.1
        clean = rescale_losses(_make_losses(T, k, seed=10))
        Z = NoiseMatrix.bounded(T, k, b, seed=11)
        sequence = run_learner(family, clean + Z.rows)
        gap, bound = noise_tolerance_check(sequence, clean, Z, family)
        assert bound == pytest.approx(2 * b)
        assert abs(gap) <= bound

    def test_laplace_noise_within_tail_threshold(self):
        T, k, sigma = 2000, 2, 0.01
        clean = rescale_losses(_make_losses(T, k, seed=12))
        Z = NoiseMatrix.laplace(T, k, sigma, seed=13)
        sequence = run_learner(FIXED, np.clip(clean + Z.rows, 0.0, 1.0))
        gap, bound = noise_tolerance_check(sequence, clean, Z, FIXED, beta=0.05)
        assert bound == pytest.approx(laplace_tolerance(sigma, T, k, 0.05, FIXED))
        assert gap <= bound

    def test_swap_tolerance_scales_with_k(self):
        fixed = laplace_tolerance(0.1, 100, 4, 0.05, FIXED)
        swap = laplace_tolerance(0.1, 100, 4, 0.05, SWAP)
        assert swap == pytest.approx(2.0 * fixed)

    def test_rescaling_triples_regret_back(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            T, k = int(rng.integers(1, 30)), int(rng.integers(2, 5))
            L = rng.random((T, k))
            played = rng.dirichlet(np.ones(k), size=T)
            f = DeviationMap(tuple(int(x) for x in rng.integers(0, k, size=k)))
            assert rho(played, L, f) == pytest.approx(3.0 * rho(played, rescale_losses(L), f), abs=1e-9)
            for family in (FIXED, SWAP):
                assert rho(played, L, family) == pytest.approx(3.0 * rho(played, rescale_losses(L), family), abs=1e-9)

    def test_constant_losses_rescale_to_constant(self):
        L = np.full((10, 3), 0.4)
        sequence = run_learner(SWAP, L)
        np.testing.assert_allclose(rescale_losses(L), (0.4 + 1.0) / 3.0)
        assert rho(sequence, L, SWAP) == pytest.approx(0.0, abs=1e-9)
        assert rho(sequence, rescale_losses(L), SWAP) == pytest.approx(0.0, abs=1e-9)

    def test_zero_noise_has_zero_gap(self):
        L = rescale_losses(_make_losses(40, 3, seed=15))
        sequence = run_learner(FIXED, L)
        gap, bound = noise_tolerance_check(sequence, L, NoiseMatrix.zeros(40, 3), FIXED)
        assert gap == pytest.approx(0.0, abs=1e-12)
        assert bound == 0.0

    def test_bounded_noise_gap_across_seeds(self):
        T, k, b = 200, 3, 0.05
        for seed in range(100):
            clean = rescale_losses(_make_losses(T, k, seed=seed))
            Z = NoiseMatrix.bounded(T, k, b, seed=1000 + seed)
            sequence = run_learner(FIXED, clean + Z.rows)
            gap, bound = noise_tolerance_check(sequence, clean, Z, FIXED)
            assert bound == pytest.approx(0.1)
            assert abs(gap) <= bound, seed

    @pytest.mark.slow
    def test_laplace_noise_gap_frequency(self):
        T, k, sigma, beta = 10**4, 4, 0.02, 0.05
        within = 0
        for seed in range(100):
            clean = rescale_losses(_make_losses(T, k, seed=seed))
            Z = NoiseMatrix.laplace(T, k, sigma, seed=2000 + seed)
            sequence = run_learner(FIXED, np.clip(clean + Z.rows, 0.0, 1.0))
            gap, bound = noise_tolerance_check(sequence, clean, Z, FIXED, beta=beta)
            within += gap <= bound
        assert within >= 95


# ===========================================================================
# 5. Regret bounds over a loss corpus and an adaptive adversary
# ===========================================================================


class TestRegretBounds:
    @pytest.mark.parametrize("kind", [FIXED, SWAP])
    @pytest.mark.parametrize("T, k", [(256, 2), (256, 4), (1024, 3)])
    def test_adaptive_adversary(self, kind, T, k):
        played, L = _adaptive_play(kind, T, k)
        fixed_bound = math.sqrt(2 * math.log(k) / T)
        if kind == FIXED:
            assert rho(played, L, FIXED) <= fixed_bound + 1e-9
        else:
            assert rho(played, L, SWAP) <= k * fixed_bound + 1e-9

    def test_adversary_targets_the_argmax(self):
        played, L = _adaptive_play(FIXED, 8, 2)
        np.testing.assert_array_equal(L.sum(axis=1), 1.0)
        np.testing.assert_array_equal(L.argmax(axis=1), played.argmax(axis=1))

    @pytest.mark.slow
    @pytest.mark.parametrize("index", range(CORPUS_SIZE))
    def test_corpus_regret_bounds(self, index):
        L = _corpus_matrix(index)
        T, k = L.shape
        fixed_bound = math.sqrt(2 * math.log(k) / T)
        assert rho(run_learner(FIXED, L), L, FIXED) <= fixed_bound + 1e-9
        assert rho(run_learner(SWAP, L), L, SWAP) <= k * fixed_bound + 1e-9

    def test_corpus_covers_every_shape(self):
        shapes = {_corpus_matrix(index).shape for index in range(len(CORPUS_SHAPES))}
        assert shapes == set(CORPUS_SHAPES)
        for index in range(0, CORPUS_SIZE, 37):
            L = _corpus_matrix(index)
            assert L.min() >= 0.0 and L.max() <= 1.0


# ===========================================================================
# 6. Coordinate-wise swap optimum
# ===========================================================================


class TestSwapOptimum:
    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(16)
        maps = list(DeviationMap.enumerate_all(3))
        for _ in range(200):
            L = rng.random((5, 3))
            played = rng.dirichlet(np.ones(3), size=5)
            by_enumeration = max(rho(played, L, f) for f in maps)
            assert rho(played, L, SWAP) == pytest.approx(by_enumeration, abs=1e-12)
            assert rho(played, L, best_swap_map(played, L)) == pytest.approx(by_enumeration, abs=1e-12)
