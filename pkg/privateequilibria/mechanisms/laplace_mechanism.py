"""NRLaplace: no-regret dynamics on Laplace-perturbed expected losses."""

import logging
from typing import Optional, Union

import numpy as np
from tqdm import tqdm

from privateequilibria.src.base_game import BaseGame, MixedStrategy
from privateequilibria.src.base_learner import SWAP, PlaySequence, make_learner, rescale_losses
from privateequilibria.src.base_mechanism import (
    BaseMechanism,
    LossOracle,
    MechanismRun,
    pinned_players,
    round_rng,
)
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import ContractError, LossOracleError, PrivEqError
from privateequilibria.src.loss_oracle import LossMode, expected_losses_all, resolve_loss_mode
from privateequilibria.src.privacy import (
    DEFAULT_T_CAP,
    Infeasible,
    PrivacyBudget,
    PrivacyLedger,
    laplace_noise,
    nrlaplace_plan_for_T,
    plan_for_nrlaplace,
    predicted_alpha_laplace,
)

logger = logging.getLogger(__name__)

NOISE_STREAM = 0
SAMPLING_STREAM = 1


def run_nrlaplace(
    game: BaseGame,
    budget: PrivacyBudget,
    beta: float,
    learner: str = SWAP,
    seed: int = 0,
    T: Optional[int] = None,
    loss_mode: Optional[Union[str, LossMode]] = None,
    T_cap: int = DEFAULT_T_CAP,
    oracle: LossOracle = expected_losses_all,
    progress: bool = False,
) -> Union[MechanismRun, Infeasible]:
    """
    Run every player's learner for T rounds on rescaled expected losses plus Lap(sigma) noise.

    Args:
        game: the game, holding the reported types
        budget: target (epsilon, delta)
        beta: failure probability used by the plan and the accuracy bound
        learner: 'fixed' (Hedge) or 'swap' (Blum-Mansour)
        seed: root of all randomness; noise for (round t, player i) comes from its own stream
        T: explicit round count; None solves the accuracy constraint for the largest T
        loss_mode: forced loss backend; None picks one from the family
        T_cap: upper limit for the automatic round count
        oracle: expected-loss function, replaceable for instrumentation
        progress: show a tqdm bar over rounds

    Returns:
        MechanismRun, or the planner's Infeasible when no T satisfies the constraint
    """
    n, k = game.n, game.k
    if T is None:
        plan = plan_for_nrlaplace(n, k, game.gamma, budget.epsilon, budget.delta, beta, T_cap)
        if isinstance(plan, Infeasible):
            logger.info("NRLaplace infeasible: %s", plan.message())
            return plan
    else:
        plan = nrlaplace_plan_for_T(n, k, game.gamma, budget.epsilon, budget.delta, beta, T)
        if not plan.satisfies_constraint:
            logger.warning(
                "explicit T=%d violates the accuracy constraint: sigma=%.6g > %.6g", T, plan.lhs, plan.rhs
            )
    T, sigma = plan.T, plan.sigma
    mode = resolve_loss_mode(game, loss_mode)
    logger.info("NRLaplace: n=%d k=%d T=%d sigma=%.6g loss backend %s", n, k, T, sigma, mode)

    pinned = set(pinned_players(game))
    learners = {i: make_learner(learner, k, T) for i in range(n) if i not in pinned}
    states = np.empty((n, T + 1, k))
    profiles = np.empty((T, n, k))
    true_losses = np.empty((n, T, k))
    noisy_losses = np.empty((n, T, k))
    clamp_counts = np.zeros((n, T), dtype=np.int64)
    pinned_row = {i: np.asarray(MixedStrategy.point_mass(k, game.null_action)) for i in pinned}
    for i in range(n):
        states[i, 0] = pinned_row[i] if i in pinned else learners[i].current

    for t in tqdm(range(T), desc="NRLaplace rounds", disable=not progress):
        profile = states[:, t, :]
        profiles[t] = profile
        rngs = [round_rng(seed, t, i, SAMPLING_STREAM) for i in range(n)] if mode.name == "monte_carlo" else None
        try:
            losses = np.asarray(oracle(game, profile, mode, rngs, None), dtype=float)
        except PrivEqError as e:
            raise LossOracleError(str(e), t) from e
        if losses.shape != (n, k):
            raise LossOracleError(f"oracle returned shape {losses.shape}, expected {(n, k)}", t)
        true_losses[:, t] = losses
        rescaled = rescale_losses(losses)
        for i in range(n):
            noisy = rescaled[i] + laplace_noise(sigma, k, round_rng(seed, t, i, NOISE_STREAM))
            noisy_losses[i, t] = noisy
            clamp_counts[i, t] = np.count_nonzero((noisy < 0.0) | (noisy > 1.0))
            if i in pinned:
                states[i, t + 1] = pinned_row[i]
            else:
                states[i, t + 1] = learners[i].update(np.clip(noisy, 0.0, 1.0))

    clamped = int(clamp_counts.sum())
    if clamped:
        logger.warning("clamped %d noisy loss entries into [0, 1]", clamped)
    ledger = PrivacyLedger(plan.per_step_epsilon, budget.delta)
    ledger.record(n * k * T)
    sequences = tuple(None if i in pinned else PlaySequence(states[i]) for i in range(n))
    return MechanismRun(
        mechanism=LaplaceMechanism.name,
        game=game,
        distribution=CorrelatedDistribution(profiles),
        sequences=sequences,
        true_losses=true_losses,
        noisy_losses=noisy_losses,
        clamp_counts=clamp_counts,
        plan=plan,
        params={
            "epsilon": budget.epsilon,
            "delta": budget.delta,
            "beta": beta,
            "learner": learner,
            "seed": seed,
            "T": T,
        },
        predicted_alpha=predicted_alpha_laplace(n, k, game.gamma, budget.epsilon, budget.delta, beta, T),
        loss_mode=str(mode),
        ledger=ledger,
        stats={"clamped": clamped, "pinned": sorted(pinned)},
    )


class LaplaceMechanism(BaseMechanism):
    name = "laplace"

    def run(self, game: BaseGame, seed: int) -> Union[MechanismRun, Infeasible]:
        if self.budget is None:
            raise ContractError("the Laplace mechanism needs a privacy budget")
        return run_nrlaplace(
            game,
            self.budget,
            self.beta,
            learner=self.learner,
            seed=seed,
            T=self.T,
            loss_mode=self.loss_mode,
            T_cap=self.T_cap or DEFAULT_T_CAP,
            progress=self.verbose,
        )
