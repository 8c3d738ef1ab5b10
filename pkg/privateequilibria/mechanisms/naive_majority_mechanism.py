"""Non-private baseline for the beach/mountain game: send everybody where the majority of reports points."""

import logging

import numpy as np

from privateequilibria.games.beach_mountain.beach_mountain_game import BEACH, MOUNTAIN, BeachMountainGame
from privateequilibria.src.base_game import BaseGame
from privateequilibria.src.base_mechanism import BaseMechanism, MechanismRun
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import ContractError

logger = logging.getLogger(__name__)


def majority_action(game: BeachMountainGame) -> int:
    """Beach if fewer than half of the non-null reports are beach types, otherwise mountain.

    Both all-beach and all-mountain are equilibria, and the rule picks the one
    the minority prefers, so one report flipping the majority moves everybody.
    """
    return BEACH if game.beach_count() < game.reported_count() / 2 else MOUNTAIN


class NaiveMajorityMechanism(BaseMechanism):
    name = "naive_majority"
    private = False

    def run(self, game: BaseGame, seed: int) -> MechanismRun:
        if not isinstance(game, BeachMountainGame):
            raise ContractError(f"naive majority only runs on the beach/mountain game, got {game.family!r}")
        action = majority_action(game)
        rounds = np.zeros((1, game.n, game.k))
        rounds[0, :, action] = 1.0
        logger.debug("naive majority: %d beach of %d reports -> action %d", game.beach_count(), game.reported_count(), action)
        return MechanismRun(
            mechanism=self.name,
            game=game,
            distribution=CorrelatedDistribution(rounds),
            params={"seed": seed},
            predicted_alpha=0.0,
            loss_mode="exact",
            stats={"action": action},
        )


__all__ = ["NaiveMajorityMechanism", "majority_action"]
