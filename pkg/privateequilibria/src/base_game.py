import json
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from privateequilibria.src.exceptions import ContractError
from privateequilibria.utils.load_class_from_str import load_class_from_string

ActionId = int
PlayerType = str

# Reported by a player who opts out of the proxy.
NULL_TYPE: PlayerType = "__null__"

PROB_TOL = 1e-9
CLAMP_TOL = 1e-12
UTILITY_TOL = 1e-12

GAME_FAMILIES: Dict[str, str] = {
    "beach_mountain": "privateequilibria.games.beach_mountain.beach_mountain_game.BeachMountainGame",
    "random_aggregative": "privateequilibria.games.random_utility.random_utility_game.RandomAggregativeGame",
    "random_table": "privateequilibria.games.random_utility.random_utility_game.RandomTableGame",
    "lowerbound": "privateequilibria.games.lowerbound.lowerbound_game.LowerBoundGame",
}


class MixedStrategy:
    """A probability vector over the k actions.

    Construction validates the entries, maps tiny negative round-off to zero
    and renormalizes. The wrapped array is read-only.
    """

    __slots__ = ("probs",)

    def __init__(self, probs: Union[Sequence[float], np.ndarray]):
        arr = np.array(probs, dtype=float).reshape(-1)
        if arr.size == 0:
            raise ContractError("a mixed strategy needs at least one action")
        if not np.all(np.isfinite(arr)):
            raise ContractError(f"mixed strategy has non-finite entries: {arr.tolist()}")
        if np.any(arr < -CLAMP_TOL):
            raise ContractError(f"mixed strategy has negative entries: {arr.tolist()}")
        arr[arr < 0.0] = 0.0
        total = arr.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ContractError(f"mixed strategy sums to {total!r}, expected 1")
        arr = arr / total
        arr.setflags(write=False)
        self.probs = arr

    @classmethod
    def uniform(cls, k: int) -> "MixedStrategy":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point_mass(cls, k: int, action: ActionId) -> "MixedStrategy":
        if not 0 <= action < k:
            raise ContractError(f"action {action} outside [0, {k})")
        probs = np.zeros(k)
        probs[action] = 1.0
        return cls(probs)

    @classmethod
    def from_weights(cls, weights: Union[Sequence[float], np.ndarray]) -> "MixedStrategy":
        """Normalize nonnegative weights; entries below 1e-12 of the total become exact zeros."""
        arr = np.array(weights, dtype=float).reshape(-1)
        if np.any(arr < -CLAMP_TOL) or arr.sum() <= 0.0:
            raise ContractError(f"weights must be nonnegative with positive mass: {arr.tolist()}")
        arr = np.clip(arr, 0.0, None) / arr.sum()
        arr[arr < CLAMP_TOL] = 0.0
        return cls(arr / arr.sum())

    @property
    def k(self) -> int:
        return int(self.probs.size)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __len__(self) -> int:
        return self.k

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedStrategy):
            return NotImplemented
        return bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"MixedStrategy({self.probs.tolist()})"


class ActionProfile:
    """One action per player."""

    __slots__ = ("actions",)

    def __init__(self, actions: Sequence[ActionId]):
        self.actions: Tuple[int, ...] = tuple(int(a) for a in actions)

    def validate(self, n: int, k: int) -> "ActionProfile":
        if len(self.actions) != n:
            raise ContractError(f"profile has {len(self.actions)} actions, game has {n} players")
        for player, action in enumerate(self.actions):
            if not 0 <= action < k:
                raise ContractError(f"player {player} action {action} outside [0, {k})")
        return self

    def replace(self, player: int, action: ActionId) -> "ActionProfile":
        actions = list(self.actions)
        actions[player] = int(action)
        return ActionProfile(actions)

    def __iter__(self):
        return iter(self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, index):
        return self.actions[index]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ActionProfile):
            return self.actions == other.actions
        if isinstance(other, tuple):
            return self.actions == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.actions)

    def __repr__(self) -> str:
        return f"ActionProfile({list(self.actions)})"


class GameSpec(BaseModel):
    """On-disk description of a game instance (schema of the game JSON file)."""

    family: str
    n: int
    k: int
    gamma: float
    types: List[str]
    params: Dict[str, Any] = Field(default_factory=dict)
    null_action: Optional[int] = None


def load_game_spec(path: str) -> GameSpec:
    with open(path, "r", encoding="utf-8") as f:
        return GameSpec.model_validate_json(f.read())


def dump_game_spec(spec: GameSpec) -> str:
    return json.dumps(spec.model_dump(), indent=2, ensure_ascii=False) + "\n"


class BaseGame(ABC):
    """An n-player, k-action, gamma-sensitive game with type-dependent utilities.

    Subclasses implement ``raw_utility`` on their natural payoff range and
    declare ``payoff_scale`` so that ``utility`` lands in [0, 1]. Families whose
    utility depends only on the own action, own type and the per-action counts
    of the other players set ``aggregative = True`` and implement
    ``aggregate_utilities``.
    """

    family: str = ""
    payoff_scale: float = 1.0
    aggregative: bool = False

    def __init__(
        self,
        n: int,
        k: int,
        types: Sequence[PlayerType],
        type_universe: Sequence[PlayerType],
        gamma: float,
        params: Optional[Dict[str, Any]] = None,
        null_action: Optional[int] = None,
    ):
        if n < 1:
            raise ContractError(f"n must be at least 1, got {n}")
        if k < 2:
            raise ContractError(f"k must be at least 2, got {k}")
        if gamma < 0:
            raise ContractError(f"gamma must be nonnegative, got {gamma}")
        if len(types) != n:
            raise ContractError(f"expected {n} types, got {len(types)}")
        universe = tuple(type_universe)
        if len(set(universe)) != len(universe) or not universe:
            raise ContractError(f"type universe must be nonempty and duplicate-free: {universe}")
        allowed = set(universe) | {NULL_TYPE}
        for player, t in enumerate(types):
            if t not in allowed:
                raise ContractError(f"player {player} type {t!r} is not in the type universe")
        if null_action is not None and not 0 <= null_action < k:
            raise ContractError(f"null action {null_action} outside [0, {k})")
        self.n = int(n)
        self.k = int(k)
        self.types: Tuple[PlayerType, ...] = tuple(types)
        self.type_universe: Tuple[PlayerType, ...] = universe
        self.gamma = float(gamma)
        self.params: Dict[str, Any] = dict(params or {})
        self.null_action = null_action

    @property
    def U(self) -> int:
        return len(self.type_universe)

    @abstractmethod
    def raw_utility(self, player: int, player_type: PlayerType, profile: Tuple[int, ...]) -> float:
        """Payoff of ``player`` holding ``player_type`` at ``profile``, on the family's own scale."""

    def utility(self, player: int, player_type: PlayerType, profile: Sequence[int]) -> float:
        if player_type == NULL_TYPE:
            return 0.0
        value = self.raw_utility(player, player_type, tuple(profile)) / self.payoff_scale
        if value < -UTILITY_TOL or value > 1.0 + UTILITY_TOL:
            raise ContractError(
                f"{self.family} utility {value!r} for player {player} leaves [0, 1]; "
                f"check payoff_scale={self.payoff_scale}"
            )
        return min(max(value, 0.0), 1.0)

    def aggregate_utilities(self, player: int, player_type: PlayerType, counts: np.ndarray) -> np.ndarray:
        """Utilities for a batch of count vectors.

        Args:
            counts: integer array of shape (G, k); row g holds how many of the
                other n-1 players chose each action.

        Returns:
            array of shape (G, k); entry (g, j) is the utility in [0, 1] of
            playing j against count vector g.
        """
        raise ContractError(f"game family {self.family!r} does not declare aggregative structure")

    def structured_expected_utilities(
        self, player: int, player_type: PlayerType, others: np.ndarray
    ) -> Optional[np.ndarray]:
        """Closed-form expected utilities against a product profile, when the family has one."""
        return None

    def player_type(self, player: int) -> PlayerType:
        return self.types[player]

    @classmethod
    @abstractmethod
    def from_spec(cls, spec: GameSpec) -> "BaseGame":
        pass

    def to_spec(self) -> GameSpec:
        return GameSpec(
            family=self.family,
            n=self.n,
            k=self.k,
            gamma=self.gamma,
            types=list(self.types),
            params=dict(self.params),
            null_action=self.null_action,
        )

    def with_types(self, types: Sequence[PlayerType]) -> "BaseGame":
        spec = self.to_spec()
        spec.types = list(types)
        return type(self).from_spec(spec)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, k={self.k}, gamma={self.gamma!r})"


GameInstance = BaseGame


def build_game(spec: GameSpec) -> BaseGame:
    if spec.family not in GAME_FAMILIES:
        raise ContractError(f"unknown game family {spec.family!r}; known: {sorted(GAME_FAMILIES)}")
    game_class = load_class_from_string(GAME_FAMILIES[spec.family], base=BaseGame)
    game = game_class.from_spec(spec)
    if game.n != spec.n or game.k != spec.k:
        raise ContractError(f"spec declares n={spec.n}, k={spec.k} but family built n={game.n}, k={game.k}")
    return game


def load_game(path: str) -> BaseGame:
    return build_game(load_game_spec(path))
