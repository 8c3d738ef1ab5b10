import itertools
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from privateequilibria.src.base_game import NULL_TYPE, BaseGame, GameSpec, PlayerType
from privateequilibria.src.exceptions import ContractError

GAMMA_TOL = 1e-9
TABLE_PROFILE_BUDGET = 4096


def _default_universe(U: int) -> Tuple[str, ...]:
    return tuple(f"t{v}" for v in range(U))


def _random_types(n: int, universe: Sequence[str], rng: np.random.Generator) -> list:
    return [universe[v] for v in rng.integers(len(universe), size=n)]


class RandomAggregativeGame(BaseGame):
    """
    Anonymous random game with a tunable coupling c in [0, 1].

    u_i(j, counts) = (1 - c) * base[t_i, j] + c * weight[t_i, j] * counts[j] / (n - 1)

    where counts[j] is how many others chose j. base and weight are drawn
    uniformly from [0, 1] with the game's seed, so gamma = c / (n - 1).
    """

    family = "random_aggregative"
    aggregative = True

    def __init__(
        self,
        n: int,
        k: int,
        types: Sequence[PlayerType],
        coupling: float,
        seed: int,
        type_universe: Optional[Sequence[PlayerType]] = None,
        null_action: Optional[int] = None,
    ):
        if not 0.0 <= coupling <= 1.0:
            raise ContractError(f"coupling must lie in [0, 1], got {coupling}")
        if n < 2:
            raise ContractError(f"random aggregative game needs n >= 2, got {n}")
        universe = tuple(type_universe) if type_universe is not None else tuple(sorted(set(types) - {NULL_TYPE}))
        super().__init__(
            n=n,
            k=k,
            types=types,
            type_universe=universe,
            gamma=coupling / (n - 1),
            params={"coupling": coupling, "seed": seed, "type_universe": list(universe)},
            null_action=null_action,
        )
        self.coupling = float(coupling)
        rng = np.random.default_rng(seed)
        self.base = rng.random((self.U, k))
        self.weight = rng.random((self.U, k))

    def _row(self, player_type: PlayerType) -> int:
        return self.type_universe.index(player_type)

    def raw_utility(self, player: int, player_type: PlayerType, profile: Tuple[int, ...]) -> float:
        j = profile[player]
        same = sum(1 for q, a in enumerate(profile) if q != player and a == j)
        v = self._row(player_type)
        return float((1.0 - self.coupling) * self.base[v, j] + self.coupling * self.weight[v, j] * same / (self.n - 1))

    def aggregate_utilities(self, player: int, player_type: PlayerType, counts: np.ndarray) -> np.ndarray:
        v = self._row(player_type)
        share = np.asarray(counts, dtype=float) / (self.n - 1)
        return (1.0 - self.coupling) * self.base[v][None, :] + self.coupling * self.weight[v][None, :] * share

    @classmethod
    def from_spec(cls, spec: GameSpec) -> "RandomAggregativeGame":
        params = spec.params
        game = cls(
            n=spec.n,
            k=spec.k,
            types=spec.types,
            coupling=float(params["coupling"]),
            seed=int(params["seed"]),
            type_universe=params.get("type_universe"),
            null_action=spec.null_action,
        )
        if abs(game.gamma - spec.gamma) > GAMMA_TOL:
            raise ContractError(f"coupling/(n-1) = {game.gamma!r} does not match declared gamma {spec.gamma!r}")
        return game

    @classmethod
    def from_config(cls, n: int, k: int = 2, U: int = 2, coupling: float = 1.0, seed: int = 0):
        universe = _default_universe(U)
        types = _random_types(n, universe, np.random.default_rng([seed, 1]))
        return cls(n, k, types, coupling, seed, universe)


class RandomTableGame(BaseGame):
    """
    Full random payoff table for a handful of players.

    ``independent=True`` makes every utility depend only on the own action
    (gamma = 0); otherwise gamma is the exact maximum cross-player effect,
    found by enumerating every profile.
    """

    family = "random_table"

    def __init__(
        self,
        n: int,
        k: int,
        types: Sequence[PlayerType],
        seed: int,
        independent: bool = False,
        type_universe: Optional[Sequence[PlayerType]] = None,
        null_action: Optional[int] = None,
    ):
        if k**n > TABLE_PROFILE_BUDGET:
            raise ContractError(f"random table game stores k^n = {k}^{n} profiles, limit {TABLE_PROFILE_BUDGET}")
        universe = tuple(type_universe) if type_universe is not None else tuple(sorted(set(types) - {NULL_TYPE}))
        rng = np.random.default_rng(seed)
        columns = k if independent else k**n
        table = rng.random((n, len(universe), columns))
        self.table = table
        self.independent = bool(independent)
        self._strides = k ** np.arange(n - 1, -1, -1)
        super().__init__(
            n=n,
            k=k,
            types=types,
            type_universe=universe,
            gamma=0.0 if independent else self._exact_gamma(n, k, types, universe),
            params={"seed": seed, "independent": bool(independent), "type_universe": list(universe)},
            null_action=null_action,
        )

    def _column(self, player: int, profile: Sequence[int]) -> int:
        if self.independent:
            return int(profile[player])
        return int(np.dot(self._strides, profile))

    def _exact_gamma(self, n: int, k: int, types: Sequence[PlayerType], universe: Tuple[str, ...]) -> float:
        worst = 0.0
        for profile in itertools.product(range(k), repeat=n):
            base = int(np.dot(self._strides, profile))
            for mover in range(n):
                for action in range(k):
                    moved = base + (action - profile[mover]) * int(self._strides[mover])
                    for observer in range(n):
                        if observer == mover:
                            continue
                        for v in range(len(universe)):
                            worst = max(worst, abs(self.table[observer, v, base] - self.table[observer, v, moved]))
        return float(worst)

    def raw_utility(self, player: int, player_type: PlayerType, profile: Tuple[int, ...]) -> float:
        return float(self.table[player, self.type_universe.index(player_type), self._column(player, profile)])

    @classmethod
    def from_spec(cls, spec: GameSpec) -> "RandomTableGame":
        params: Dict[str, Any] = spec.params
        game = cls(
            n=spec.n,
            k=spec.k,
            types=spec.types,
            seed=int(params["seed"]),
            independent=bool(params.get("independent", False)),
            type_universe=params.get("type_universe"),
            null_action=spec.null_action,
        )
        if abs(game.gamma - spec.gamma) > GAMMA_TOL:
            raise ContractError(f"table gamma {game.gamma!r} does not match declared gamma {spec.gamma!r}")
        return game

    @classmethod
    def from_config(cls, n: int, k: int = 2, U: int = 2, seed: int = 0, independent: bool = False):
        universe = _default_universe(U)
        types = _random_types(n, universe, np.random.default_rng([seed, 1]))
        return cls(n, k, types, seed, independent, universe)


__all__ = ["RandomAggregativeGame", "RandomTableGame"]
