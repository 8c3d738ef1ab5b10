"""The correlated distribution Pi_S and the equilibrium certificate.

Pi_S is stored as a mixture of product distributions: pick round t with
probability w_t (uniform unless the producer says otherwise), then draw each
player's action independently from that round's mixed strategy. It is never
materialized over the joint action space.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from privateequilibria.src.base_game import ActionProfile, BaseGame, PROB_TOL
from privateequilibria.src.exceptions import ContractError, ResourceError
from privateequilibria.src.loss_oracle import (
    EXACT_PROFILE_BUDGET,
    LossMode,
    expected_utilities,
    has_structured_backend,
    sample_actions,
    utilities_all,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CorrelatedDistribution:
    """``rounds[t, i]`` is player i's mixed strategy in round t; ``weights`` are round probabilities."""

    rounds: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        rounds = np.array(self.rounds, dtype=float)
        if rounds.ndim != 3 or rounds.shape[0] < 1:
            raise ContractError(f"distribution rounds need shape (T, n, k) with T >= 1, got {rounds.shape}")
        if np.any(rounds < -PROB_TOL) or np.any(np.abs(rounds.sum(axis=2) - 1.0) > PROB_TOL):
            raise ContractError("every (round, player) entry must be a probability vector")
        rounds = np.clip(rounds, 0.0, None)
        rounds.setflags(write=False)
        object.__setattr__(self, "rounds", rounds)
        if self.weights is not None:
            weights = np.array(self.weights, dtype=float).reshape(-1)
            if weights.size != rounds.shape[0] or np.any(weights < 0) or weights.sum() <= 0:
                raise ContractError(f"round weights must be {rounds.shape[0]} nonnegative values with positive mass")
            weights = weights / weights.sum()
            weights.setflags(write=False)
            object.__setattr__(self, "weights", weights)

    @classmethod
    def from_rounds(cls, rounds: Sequence[Sequence[Sequence[float]]], weights=None) -> "CorrelatedDistribution":
        return cls(np.asarray(rounds, dtype=float), weights)

    @classmethod
    def from_played(cls, played: Sequence[np.ndarray]) -> "CorrelatedDistribution":
        """Stack n per-player played sequences of shape (T, k) into one distribution."""
        return cls(np.stack([np.asarray(p, dtype=float) for p in played], axis=1))

    @property
    def T(self) -> int:
        return self.rounds.shape[0]

    @property
    def n(self) -> int:
        return self.rounds.shape[1]

    @property
    def k(self) -> int:
        return self.rounds.shape[2]

    @property
    def probabilities(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.T, 1.0 / self.T)
        return self.weights

    def marginals(self) -> np.ndarray:
        """Per-player action marginals, shape (n, k)."""
        return np.einsum("t,tik->ik", self.probabilities, self.rounds)

    def permuted(self, order: Sequence[int]) -> "CorrelatedDistribution":
        order = np.asarray(order, dtype=int)
        weights = None if self.weights is None else self.weights[order]
        return CorrelatedDistribution(self.rounds[order], weights)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "T": self.T,
            "n": self.n,
            "k": self.k,
            "rounds": self.rounds.tolist(),
            "weights": None if self.weights is None else self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CorrelatedDistribution":
        if data.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ContractError(f"unsupported distribution schema {data.get('schema')!r}")
        return cls(np.asarray(data["rounds"], dtype=float), data.get("weights"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def load(cls, path: str) -> "CorrelatedDistribution":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls.from_dict(data.get("distribution", data))


@dataclass(frozen=True)
class EquilibriumCertificate:
    fixed_regret: Tuple[float, ...]
    swap_regret: Tuple[float, ...]
    mode: str
    player_stderr: Optional[Tuple[float, ...]] = None
    best_swap: Tuple[Tuple[int, ...], ...] = field(default_factory=tuple)

    @property
    def alpha_cce(self) -> float:
        return max(self.fixed_regret)

    @property
    def alpha_ce(self) -> float:
        return max(self.swap_regret)

    @property
    def stderr(self) -> Optional[float]:
        if self.player_stderr is None:
            return None
        return max(self.player_stderr)

    def to_dict(self) -> Dict[str, Any]:
        per_player = []
        for i, (fixed, swap) in enumerate(zip(self.fixed_regret, self.swap_regret)):
            entry: Dict[str, Any] = {"player": i, "fixed_regret": fixed, "swap_regret": swap}
            if self.best_swap:
                entry["best_swap"] = list(self.best_swap[i])
            if self.player_stderr is not None:
                entry["stderr"] = self.player_stderr[i]
            per_player.append(entry)
        return {
            "schema": SCHEMA_VERSION,
            "alpha_cce": self.alpha_cce,
            "alpha_ce": self.alpha_ce,
            "per_player": per_player,
            "mode": self.mode,
            "stderr": self.stderr,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _exact_backend(game: BaseGame) -> LossMode:
    if has_structured_backend(game):
        return LossMode("structured")
    if game.aggregative:
        return LossMode("anonymous")
    if game.k ** (game.n - 1) <= EXACT_PROFILE_BUDGET:
        return LossMode("exact")
    raise ResourceError(
        f"no exact backend for {game.family} with n={game.n}, k={game.k}; use monte_carlo verification"
    )


def resolve_verify_mode(game: BaseGame, mode: Union[str, LossMode, None]) -> LossMode:
    """'exact' (or None) picks the cheapest exact backend; anything else is taken literally."""
    if mode is None or str(mode) == "exact":
        return _exact_backend(game)
    return LossMode.parse(mode)


def utility_tables(
    dist: CorrelatedDistribution,
    game: BaseGame,
    mode: Union[str, LossMode, None] = "exact",
    seed: int = 0,
) -> Tuple[np.ndarray, Optional[np.ndarray], str]:
    """Per-round expected utilities u[i, t, j] = E_{pi_-i,t}[u_i(j, a_-i)].

    Returns:
        (utilities, stderr, backend) with arrays of shape (n, T, k); stderr is
        None unless the backend is monte_carlo
    """
    if dist.n != game.n or dist.k != game.k:
        raise ContractError(f"distribution is {dist.n}x{dist.k}, game is {game.n}x{game.k}")
    mode = resolve_verify_mode(game, mode)
    tables = np.zeros((game.n, dist.T, game.k))
    if mode.name != "monte_carlo":
        for t in range(dist.T):
            tables[:, t, :] = utilities_all(game, dist.rounds[t], mode)
        return tables, None, str(mode)
    stderr = np.zeros_like(tables)
    for t in range(dist.T):
        for i in range(game.n):
            rng = np.random.default_rng([seed, t, i])
            others = np.delete(dist.rounds[t], i, axis=0)
            tables[i, t], stderr[i, t] = expected_utilities(game, i, others, mode, rng)
    return tables, stderr, str(mode)


def regrets_from_tables(
    dist: CorrelatedDistribution, tables: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, ...]]]:
    """Fixed and swap regret of every player from its utility table.

    The optimal swap is built per recommended action r from the conditional
    utilities C[r, j] = sum_t w_t pi_t(r) u_t(j).
    """
    w = dist.probabilities
    fixed = np.zeros(dist.n)
    swap = np.zeros(dist.n)
    maps: List[Tuple[int, ...]] = []
    for i in range(dist.n):
        pi = dist.rounds[:, i, :]
        u = tables[i]
        own = float(np.einsum("t,tj,tj->", w, pi, u))
        fixed[i] = float((w @ u).max()) - own
        conditional = (w[:, None] * pi).T @ u
        swap[i] = float(conditional.max(axis=1).sum()) - own
        maps.append(tuple(int(j) for j in conditional.argmax(axis=1)))
    return fixed, swap, maps


def verify(
    dist: CorrelatedDistribution,
    game: BaseGame,
    mode: Union[str, LossMode, None] = "exact",
    seed: int = 0,
) -> EquilibriumCertificate:
    """Certify dist as an alpha-approximate CCE (fixed deviations) and CE (swap deviations)."""
    tables, stderr, backend = utility_tables(dist, game, mode, seed)
    fixed, swap, maps = regrets_from_tables(dist, tables)
    player_stderr = None
    if stderr is not None:
        # both the followed and the deviating term carry the per-round error
        w = dist.probabilities
        worst = stderr.max(axis=2)
        player_stderr = tuple(float(2.0 * np.sqrt(np.sum((w * worst[i]) ** 2))) for i in range(game.n))
    certificate = EquilibriumCertificate(
        fixed_regret=tuple(float(x) for x in fixed),
        swap_regret=tuple(float(x) for x in swap),
        mode=backend,
        player_stderr=player_stderr,
        best_swap=tuple(maps),
    )
    logger.debug("verified %s: alpha_cce=%.6g alpha_ce=%.6g", backend, certificate.alpha_cce, certificate.alpha_ce)
    return certificate


def sample_profile(dist: CorrelatedDistribution, rng: np.random.Generator) -> ActionProfile:
    """Uniform (or weighted) round, then one independent draw per player."""
    t = int(rng.choice(dist.T, p=dist.probabilities))
    return ActionProfile(sample_actions(np.asarray(dist.rounds[t]), 1, rng)[0])
