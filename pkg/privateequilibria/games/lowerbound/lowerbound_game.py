"""The reduction game that turns an equilibrium oracle into subset-sum query answers.

Data player i is paid 1 for playing its database bit d_i. Query player (j, h)
is paid f_h(q_j(a)) for action 0 and g_h(q_j(a)) for action 1, where q_j(a)
is the fraction of the n data players that sit in query j and play 1. f_h and
g_h are 1-Lipschitz sawtooth functions whose winner flips every 2^-h, so the
action a query player prefers reveals which half of a shrinking interval
holds q_j(D).
"""

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from privateequilibria.src.base_game import BaseGame, GameSpec, PlayerType
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import ContractError

DATA_TYPES = ("0", "1")
QUERY_TYPE = "query"
TYPE_UNIVERSE = DATA_TYPES + (QUERY_TYPE,)
TIE_TOL = 1e-12

Interval = Tuple[float, float]


def _check_level(h: int) -> None:
    if h < 1:
        raise ContractError(f"level h must be at least 1, got {h}")


def f_h(h: int, x):
    """1 - min_r |x - (2^-(h+1) + r 2^-(h-1))| over r = 0 .. 2^(h-1) - 1."""
    _check_level(h)
    centers = 2.0 ** -(h + 1) + np.arange(2 ** (h - 1)) * 2.0 ** -(h - 1)
    x_arr = np.asarray(x, dtype=float)
    value = 1.0 - np.abs(x_arr[..., None] - centers).min(axis=-1)
    return float(value) if value.ndim == 0 else value


def g_h(h: int, x):
    """1 - min_r |x - (2^-h + 2^-(h+1) + r 2^-(h-1))| over r = 0 .. 2^(h-1) - 1."""
    _check_level(h)
    centers = 2.0**-h + 2.0 ** -(h + 1) + np.arange(2 ** (h - 1)) * 2.0 ** -(h - 1)
    x_arr = np.asarray(x, dtype=float)
    value = 1.0 - np.abs(x_arr[..., None] - centers).min(axis=-1)
    return float(value) if value.ndim == 0 else value


def region_intervals(h: int, beta: float, which: str = "F") -> List[Interval]:
    """
    F_{h,beta} (where f_h wins) or G_{h,beta} (where g_h wins) as a list of intervals.

    The unit interval is cut into 2^h blocks of width 2^-h. F takes the even
    blocks and G the odd ones, each shrunk by beta at both ends, except that
    F keeps 0 and G keeps 1.
    """
    _check_level(h)
    if which not in ("F", "G"):
        raise ContractError(f"region must be 'F' or 'G', got {which!r}")
    width = 2.0**-h
    first = 0 if which == "F" else 1
    intervals = []
    for block in range(first, 2**h, 2):
        lo = block * width + beta
        hi = (block + 1) * width - beta
        if block == 0:
            lo = 0.0
        if block == 2**h - 1:
            hi = 1.0
        if hi > lo:
            intervals.append((lo, hi))
    return intervals


def in_region(h: int, beta: float, x: float, which: str = "F", closed: bool = False) -> bool:
    """Membership in F/G; ``closed`` admits the shrunk block endpoints themselves."""
    for lo, hi in region_intervals(h, beta, which):
        at_lo = lo == 0.0 or closed
        at_hi = hi == 1.0 or closed
        if (lo < x or (at_lo and x == lo)) and (x < hi or (at_hi and x == hi)):
            return True
    return False


@dataclass(frozen=True)
class SubsetSumInstance:
    """Database bits and subset queries; query indices are 0-based in memory, 1-based on disk."""

    database: Tuple[int, ...]
    queries: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        database = tuple(int(b) for b in self.database)
        if any(b not in (0, 1) for b in database):
            raise ContractError(f"database entries must be bits: {database}")
        queries = tuple(tuple(sorted(int(i) for i in q)) for q in self.queries)
        for j, q in enumerate(queries):
            if not q:
                raise ContractError(f"query {j} is empty")
            if any(not 0 <= i < len(database) for i in q):
                raise ContractError(f"query {j} = {q} is not a subset of the {len(database)} data players")
        object.__setattr__(self, "database", database)
        object.__setattr__(self, "queries", queries)

    @property
    def n(self) -> int:
        return len(self.database)

    @property
    def m(self) -> int:
        return len(self.queries)

    def answer(self, j: int, bits: Optional[Sequence[int]] = None) -> float:
        """q_j(bits) = (1/n) * sum of bits[i] over i in query j; defaults to the database."""
        bits = self.database if bits is None else bits
        return sum(bits[i] for i in self.queries[j]) / self.n

    def answers(self) -> List[float]:
        return [self.answer(j) for j in range(self.m)]

    def to_dict(self) -> dict:
        return {"database": list(self.database), "queries": [[i + 1 for i in q] for q in self.queries]}

    @classmethod
    def from_dict(cls, data: dict) -> "SubsetSumInstance":
        return cls(tuple(data["database"]), tuple(tuple(i - 1 for i in q) for q in data["queries"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    @classmethod
    def load(cls, path: str) -> "SubsetSumInstance":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def random(cls, n: int, m: int, seed: int, density: float = 0.5) -> "SubsetSumInstance":
        rng = np.random.default_rng(seed)
        database = tuple(int(b) for b in rng.integers(2, size=n))
        queries = []
        while len(queries) < m:
            mask = rng.random(n) < density
            if mask.any():
                queries.append(tuple(int(i) for i in np.flatnonzero(mask)))
        return cls(database, tuple(queries))


def levels_for(n: int) -> int:
    """ceil(log2 n) query players per query."""
    return max(1, math.ceil(math.log2(n)))


class LowerBoundGame(BaseGame):
    family = "lowerbound"

    def __init__(self, instance: SubsetSumInstance, null_action: Optional[int] = None):
        if instance.n < 2 or instance.m < 1:
            raise ContractError(f"need n >= 2 data players and m >= 1 queries, got n={instance.n}, m={instance.m}")
        self.instance = instance
        self.levels = levels_for(instance.n)
        types = [DATA_TYPES[b] for b in instance.database] + [QUERY_TYPE] * (instance.m * self.levels)
        super().__init__(
            n=len(types),
            k=2,
            types=types,
            type_universe=TYPE_UNIVERSE,
            gamma=1.0 / instance.n,
            params=instance.to_dict(),
            null_action=null_action,
        )

    @property
    def n_data(self) -> int:
        return self.instance.n

    def player_index(self, j: int, h: int) -> int:
        """Index of query player (j, h), with j 0-based and h in 1..levels."""
        if not 0 <= j < self.instance.m or not 1 <= h <= self.levels:
            raise ContractError(f"no query player ({j}, {h})")
        return self.n_data + j * self.levels + (h - 1)

    def query_player(self, player: int) -> Tuple[int, int]:
        offset = player - self.n_data
        if offset < 0:
            raise ContractError(f"player {player} is a data player")
        return offset // self.levels, offset % self.levels + 1

    def raw_utility(self, player: int, player_type: PlayerType, profile: Tuple[int, ...]) -> float:
        if player < self.n_data:
            return 1.0 if profile[player] == int(player_type) else 0.0
        j, h = self.query_player(player)
        x = self.instance.answer(j, profile[: self.n_data])
        return f_h(h, x) if profile[player] == 0 else g_h(h, x)

    def structured_expected_utilities(self, player: int, player_type: PlayerType, others: np.ndarray):
        """Data players in O(1); query players through the Poisson-binomial law of the query count."""
        if player < self.n_data:
            utilities = np.zeros(2)
            utilities[int(player_type)] = 1.0
            return utilities
        j, h = self.query_player(player)
        pmf = np.ones(1)
        for i in self.instance.queries[j]:
            p_one = float(others[i][1])
            pmf = np.convolve(pmf, [1.0 - p_one, p_one])
        x = np.arange(pmf.size) / self.n_data
        return np.array([pmf @ f_h(h, x), pmf @ g_h(h, x)])

    @classmethod
    def from_spec(cls, spec: GameSpec) -> "LowerBoundGame":
        game = cls(SubsetSumInstance.from_dict(spec.params), spec.null_action)
        if game.n != spec.n or list(game.types) != list(spec.types):
            raise ContractError("lower-bound spec types disagree with its database")
        return game

    @classmethod
    def from_config(cls, n: int, m: int, seed: int = 0, density: float = 0.5) -> "LowerBoundGame":
        return cls(SubsetSumInstance.random(n, m, seed, density))

    def with_types(self, types: Sequence[PlayerType]) -> "LowerBoundGame":
        game = object.__new__(type(self))
        BaseGame.__init__(
            game, self.n, self.k, types, self.type_universe, self.gamma, dict(self.params), self.null_action
        )
        game.instance = self.instance
        game.levels = self.levels
        return game


def build_lowerbound_game(instance: SubsetSumInstance) -> LowerBoundGame:
    return LowerBoundGame(instance)


def preferred_action(h: int, x: float) -> Optional[int]:
    """0 when f_h wins at x, 1 when g_h wins, None on a tie."""
    diff = f_h(h, x) - g_h(h, x)
    if abs(diff) <= TIE_TOL:
        return None
    return 0 if diff > 0 else 1


def planted_distribution(game: LowerBoundGame, perturb: float = 0.0) -> CorrelatedDistribution:
    """
    One-round exact equilibrium: data players play their bits, each query player its preferred action.

    Ties are split 50/50. ``perturb`` mixes every strategy toward uniform by
    that weight.
    """
    if not 0.0 <= perturb <= 1.0:
        raise ContractError(f"perturb must lie in [0, 1], got {perturb}")
    rows = np.zeros((game.n, 2))
    for i, bit in enumerate(game.instance.database):
        rows[i, bit] = 1.0
    for j in range(game.instance.m):
        x = game.instance.answer(j)
        for h in range(1, game.levels + 1):
            action = preferred_action(h, x)
            player = game.player_index(j, h)
            if action is None:
                rows[player] = 0.5
            else:
                rows[player, action] = 1.0
    rows = (1.0 - perturb) * rows + perturb / 2.0
    return CorrelatedDistribution(rows[None, :, :])


__all__ = [
    "LowerBoundGame",
    "SubsetSumInstance",
    "build_lowerbound_game",
    "f_h",
    "g_h",
    "in_region",
    "planted_distribution",
    "region_intervals",
]
