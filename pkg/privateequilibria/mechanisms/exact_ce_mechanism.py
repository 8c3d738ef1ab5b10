"""Non-private oracle: the welfare-maximising exact correlated equilibrium of a tiny game."""

import itertools
import logging
from typing import Tuple

import numpy as np
from scipy.optimize import linprog

from privateequilibria.src.base_game import BaseGame
from privateequilibria.src.base_mechanism import BaseMechanism, MechanismRun
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import NumericError, ResourceError

logger = logging.getLogger(__name__)

PROFILE_BUDGET = 4096
SUPPORT_TOL = 1e-12


def profile_table(game: BaseGame) -> Tuple[np.ndarray, np.ndarray]:
    """All k^n profiles in lexicographic order and the utility of every player at each, shapes (M, n)."""
    if game.k**game.n > PROFILE_BUDGET:
        raise ResourceError(f"exact CE needs k^n = {game.k}^{game.n} <= {PROFILE_BUDGET} profiles")
    profiles = np.array(list(itertools.product(range(game.k), repeat=game.n)), dtype=np.int64)
    utilities = np.array(
        [[game.utility(i, game.types[i], profile) for i in range(game.n)] for profile in profiles.tolist()]
    )
    return profiles, utilities


def solve_exact_ce(game: BaseGame) -> CorrelatedDistribution:
    """Maximise total utility subject to every swap constraint E[u_i(j, a_-i) - u_i(a) | a_i = r] <= 0."""
    n, k = game.n, game.k
    profiles, utilities = profile_table(game)
    M = profiles.shape[0]
    strides = k ** np.arange(n - 1, -1, -1)
    index = np.arange(M)
    rows = []
    for i in range(n):
        for r in range(k):
            recommended = profiles[:, i] == r
            for j in range(k):
                if j == r:
                    continue
                deviated = index + (j - r) * strides[i]
                row = np.zeros(M)
                row[recommended] = utilities[deviated[recommended], i] - utilities[recommended, i]
                rows.append(row)
    A_ub = np.array(rows) if rows else None
    b_ub = np.zeros(len(rows)) if rows else None
    result = linprog(
        c=-utilities.sum(axis=1),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=np.ones((1, M)),
        b_eq=np.array([1.0]),
        bounds=(0.0, None),
        method="highs",
    )
    if result.status != 0:
        raise NumericError(f"correlated equilibrium program failed: {result.message}")
    weights = np.clip(result.x, 0.0, None)
    support = np.flatnonzero(weights > SUPPORT_TOL)
    rounds = np.zeros((support.size, n, k))
    for row, a in enumerate(support):
        rounds[row, np.arange(n), profiles[a]] = 1.0
    logger.debug("exact CE support %d of %d profiles, welfare %.6g", support.size, M, -result.fun)
    return CorrelatedDistribution(rounds, weights[support])


class ExactCEMechanism(BaseMechanism):
    """Ignores the privacy budget; used as the eta = 0 reference in audits."""

    name = "exact_ce"
    private = False

    def run(self, game: BaseGame, seed: int) -> MechanismRun:
        distribution = solve_exact_ce(game)
        return MechanismRun(
            mechanism=self.name,
            game=game,
            distribution=distribution,
            params={"seed": seed},
            predicted_alpha=0.0,
            loss_mode="exact",
            stats={"support": distribution.T},
        )
