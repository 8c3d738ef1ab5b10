from typing import List, Optional, Sequence, Tuple

import numpy as np

from privateequilibria.src.base_game import BaseGame, GameSpec, NULL_TYPE, PlayerType
from privateequilibria.src.exceptions import ContractError

BEACH = 0
MOUNTAIN = 1
BEACH_TYPE = "beach"
MOUNTAIN_TYPE = "mountain"
TYPE_UNIVERSE = (BEACH_TYPE, MOUNTAIN_TYPE)

# payoff per (type, action) at p = fraction of others at the beach: coefficient of p and of (1 - p)
_PAYOFF = {
    BEACH_TYPE: ((10.0, 0.0), (0.0, 5.0)),
    MOUNTAIN_TYPE: ((5.0, 0.0), (0.0, 10.0)),
}


class BeachMountainGame(BaseGame):
    """
    Anonymous two-action game: every player goes to the beach or the mountain.

    With p the fraction of the *other* players at the beach, a beach type earns
    10p at the beach and 5(1-p) at the mountain; a mountain type earns 5p at the
    beach and 10(1-p) at the mountain. Payoffs are divided by 10, so one
    player's move shifts anyone else's utility by at most 1/(n-1).
    """

    family = "beach_mountain"
    payoff_scale = 10.0
    aggregative = True

    def __init__(self, types: Sequence[PlayerType], null_action: Optional[int] = None):
        n = len(types)
        if n < 2:
            raise ContractError(f"the beach/mountain game needs at least 2 players, got {n}")
        super().__init__(
            n=n,
            k=2,
            types=types,
            type_universe=TYPE_UNIVERSE,
            gamma=1.0 / (n - 1),
            null_action=null_action,
        )

    @staticmethod
    def _payoffs(player_type: PlayerType, p: np.ndarray) -> np.ndarray:
        (beach_p, beach_q), (mountain_p, mountain_q) = _PAYOFF[player_type]
        return np.stack([beach_p * p + beach_q * (1.0 - p), mountain_p * p + mountain_q * (1.0 - p)], axis=-1)

    def raw_utility(self, player: int, player_type: PlayerType, profile: Tuple[int, ...]) -> float:
        at_beach = sum(1 for q, a in enumerate(profile) if q != player and a == BEACH)
        p = at_beach / (self.n - 1)
        return float(self._payoffs(player_type, np.asarray(p))[profile[player]])

    def aggregate_utilities(self, player: int, player_type: PlayerType, counts: np.ndarray) -> np.ndarray:
        p = np.asarray(counts, dtype=float)[:, BEACH] / (self.n - 1)
        return self._payoffs(player_type, p) / self.payoff_scale

    @classmethod
    def from_spec(cls, spec: GameSpec) -> "BeachMountainGame":
        if spec.k != 2:
            raise ContractError(f"beach/mountain game has k=2, spec says k={spec.k}")
        if len(spec.types) != spec.n:
            raise ContractError(f"spec lists {len(spec.types)} types for n={spec.n}")
        game = cls(spec.types, spec.null_action)
        if abs(game.gamma - spec.gamma) > 1e-12:
            raise ContractError(f"beach/mountain gamma is 1/(n-1) = {game.gamma!r}, spec declares {spec.gamma!r}")
        return game

    @classmethod
    def from_config(
        cls,
        n: int,
        beach_types: Optional[int] = None,
        beach_fraction: float = 0.5,
        seed: Optional[int] = None,
        null_action: Optional[int] = None,
    ) -> "BeachMountainGame":
        """Exactly ``beach_types`` beach types when given, else i.i.d. Bernoulli(beach_fraction) types."""
        if beach_types is not None:
            if not 0 <= beach_types <= n:
                raise ContractError(f"beach_types must lie in [0, {n}], got {beach_types}")
            types: List[PlayerType] = [BEACH_TYPE] * beach_types + [MOUNTAIN_TYPE] * (n - beach_types)
        else:
            rng = np.random.default_rng(seed)
            draws = rng.random(n) < beach_fraction
            types = [BEACH_TYPE if b else MOUNTAIN_TYPE for b in draws]
        return cls(types, null_action)

    def beach_count(self) -> int:
        return sum(1 for t in self.types if t == BEACH_TYPE)

    def reported_count(self) -> int:
        return sum(1 for t in self.types if t != NULL_TYPE)


__all__ = ["BEACH", "BEACH_TYPE", "MOUNTAIN", "MOUNTAIN_TYPE", "BeachMountainGame"]
