"""Expected-loss backends for product strategy profiles.

``expected_loss`` returns, for one player, the vector
``l^j = 1 - E_{a_-i ~ pi_-i}[u_i(j, a_-i)]`` over the player's k actions. Four
backends are available and every caller records which one ran:

    exact        enumerate the product support (k^(n-1) <= 1e7)
    anonymous    dynamic program over action counts (aggregative families)
    structured   a closed form supplied by the family
    monte_carlo  average over sampled opponent profiles, with standard errors
"""

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal

from privateequilibria.src.base_game import NULL_TYPE, BaseGame, MixedStrategy, PlayerType
from privateequilibria.src.exceptions import ContractError, ResourceError, SensitivityViolation

logger = logging.getLogger(__name__)

EXACT_PROFILE_BUDGET = 10**7
AUTO_EXACT_BUDGET = 10**5
DEFAULT_MC_SAMPLES = 10**4
SENSITIVITY_TOL = 1e-12

StrategyRows = Union[np.ndarray, Sequence[MixedStrategy], Sequence[Sequence[float]]]


@dataclass(frozen=True)
class LossMode:
    name: str
    samples: int = 0

    NAMES = ("exact", "anonymous", "structured", "monte_carlo")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ContractError(f"unknown loss mode {self.name!r}; expected one of {self.NAMES}")
        if self.name == "monte_carlo" and self.samples < 2:
            raise ContractError(f"monte_carlo mode needs at least 2 samples, got {self.samples}")

    @classmethod
    def parse(cls, text: Union[str, "LossMode"]) -> "LossMode":
        """Accepts 'exact', 'anonymous', 'structured', 'monte_carlo' or 'monte_carlo:<samples>'."""
        if isinstance(text, LossMode):
            return text
        name, _, samples = str(text).partition(":")
        if name == "monte_carlo":
            return cls(name, int(samples) if samples else DEFAULT_MC_SAMPLES)
        if samples:
            raise ContractError(f"loss mode {name!r} takes no sample count")
        return cls(name)

    def __str__(self) -> str:
        return f"monte_carlo:{self.samples}" if self.name == "monte_carlo" else self.name


@dataclass(frozen=True)
class LossVector:
    values: np.ndarray
    mode: str
    stderr: Optional[np.ndarray] = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _as_rows(profile: StrategyRows, k: int) -> np.ndarray:
    if isinstance(profile, np.ndarray):
        rows = np.asarray(profile, dtype=float)
    else:
        rows = np.array([np.asarray(p, dtype=float) for p in profile], dtype=float)
    if rows.size == 0:
        return np.zeros((0, k))
    if rows.ndim != 2 or rows.shape[1] != k:
        raise ContractError(f"strategy rows must have shape (m, {k}), got {rows.shape}")
    return rows


def has_structured_backend(game: BaseGame) -> bool:
    return type(game).structured_expected_utilities is not BaseGame.structured_expected_utilities


def resolve_loss_mode(game: BaseGame, requested: Optional[Union[str, LossMode]] = None) -> LossMode:
    """Pick the backend a mechanism should use when the caller does not force one."""
    if requested is not None:
        mode = LossMode.parse(requested)
        if mode.name == "anonymous" and not game.aggregative:
            raise ContractError(f"anonymous mode requires an aggregative family, {game.family!r} is not")
        if mode.name == "structured" and not has_structured_backend(game):
            raise ContractError(f"game family {game.family!r} has no structured backend")
        return mode
    if has_structured_backend(game):
        return LossMode("structured")
    if game.aggregative:
        return LossMode("anonymous")
    if game.k ** (game.n - 1) <= AUTO_EXACT_BUDGET:
        return LossMode("exact")
    return LossMode("monte_carlo", DEFAULT_MC_SAMPLES)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def _exact_utilities(game: BaseGame, player: int, player_type: PlayerType, others: np.ndarray) -> np.ndarray:
    m = others.shape[0]
    if game.k ** m > EXACT_PROFILE_BUDGET:
        raise ResourceError(
            f"exact mode needs k^(n-1) = {game.k}^{m} profiles, over the budget of {EXACT_PROFILE_BUDGET}"
        )
    supports = [np.flatnonzero(row > 0.0) for row in others]
    totals = np.zeros(game.k)
    profile = [0] * game.n
    other_players = [p for p in range(game.n) if p != player]
    for combo in itertools.product(*supports):
        prob = 1.0
        for row, action in zip(others, combo):
            prob *= row[action]
        if prob == 0.0:
            continue
        for p, action in zip(other_players, combo):
            profile[p] = int(action)
        for j in range(game.k):
            profile[player] = j
            totals[j] += prob * game.utility(player, player_type, profile)
    return totals


# ---------------------------------------------------------------------------
# count dynamic program
# ---------------------------------------------------------------------------

def _add_player(grid: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Extend a count distribution by one independent player (grid axes are counts of actions 1..k-1)."""
    grown = np.zeros(tuple(d + 1 for d in grid.shape))
    base = tuple(slice(0, d) for d in grid.shape)
    grown[base] += row[0] * grid
    for axis in range(grid.ndim):
        if row[axis + 1] == 0.0:
            continue
        shifted = list(base)
        shifted[axis] = slice(1, grid.shape[axis] + 1)
        grown[tuple(shifted)] += row[axis + 1] * grid
    return grown


def _empty_grid(k: int) -> np.ndarray:
    return np.ones((1,) * (k - 1))


def count_distribution(rows: np.ndarray, k: int) -> np.ndarray:
    grid = _empty_grid(k)
    for row in rows:
        grid = _add_player(grid, row)
    return grid


@lru_cache(maxsize=64)
def _count_lattice(m: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Grid indices with at most m players in actions 1..k-1, and the full count vectors."""
    axes = np.indices((m + 1,) * (k - 1)).reshape(k - 1, -1).T
    valid = axes.sum(axis=1) <= m
    flat = np.flatnonzero(valid)
    tail = axes[valid]
    counts = np.concatenate([(m - tail.sum(axis=1))[:, None], tail], axis=1).astype(np.int64)
    flat.setflags(write=False)
    counts.setflags(write=False)
    return flat, counts


def _aggregate_expectation(
    game: BaseGame, player: int, player_type: PlayerType, grid: np.ndarray, m: int
) -> np.ndarray:
    if player_type == NULL_TYPE:
        return np.zeros(game.k)
    flat, counts = _count_lattice(m, game.k)
    probs = np.clip(grid.reshape(-1)[flat], 0.0, None)
    table = np.asarray(game.aggregate_utilities(player, player_type, counts), dtype=float)
    if table.shape != (counts.shape[0], game.k):
        raise ContractError(f"aggregate_utilities returned shape {table.shape}, expected {(counts.shape[0], game.k)}")
    if np.any(table < -SENSITIVITY_TOL) or np.any(table > 1.0 + SENSITIVITY_TOL):
        raise ContractError(f"{game.family} aggregate utilities leave [0, 1]")
    return probs @ table


def _anonymous_utilities(game: BaseGame, player: int, player_type: PlayerType, others: np.ndarray) -> np.ndarray:
    if not game.aggregative:
        raise ContractError(f"anonymous mode requires an aggregative family, {game.family!r} is not")
    grid = count_distribution(others, game.k)
    return _aggregate_expectation(game, player, player_type, grid, others.shape[0])


def _anonymous_utilities_all(game: BaseGame, profile: np.ndarray, types: Sequence[PlayerType]) -> np.ndarray:
    n, k = profile.shape
    prefix: List[np.ndarray] = [_empty_grid(k)]
    for i in range(n - 1):
        prefix.append(_add_player(prefix[-1], profile[i]))
    suffix: List[Optional[np.ndarray]] = [None] * (n + 1)
    suffix[n] = _empty_grid(k)
    for i in range(n - 1, 0, -1):
        suffix[i] = _add_player(suffix[i + 1], profile[i])
    utilities = np.zeros((n, k))
    for i in range(n):
        grid = signal.convolve(prefix[i], suffix[i + 1], mode="full")
        utilities[i] = _aggregate_expectation(game, i, types[i], grid, n - 1)
    return utilities


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def sample_actions(rows: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` independent action vectors, one action per row of ``rows``."""
    cumulative = np.cumsum(rows, axis=1)
    cumulative[:, -1] = 1.0
    draws = rng.random((size, rows.shape[0]))
    return (draws[:, :, None] >= cumulative[None, :, :]).sum(axis=2)


def _monte_carlo_utilities(
    game: BaseGame,
    player: int,
    player_type: PlayerType,
    others: np.ndarray,
    samples: int,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, np.ndarray]:
    if rng is None:
        raise ContractError("monte_carlo mode needs an explicit rng stream")
    other_players = [p for p in range(game.n) if p != player]
    draws = sample_actions(others, samples, rng)
    values = np.zeros((samples, game.k))
    profile = [0] * game.n
    for s in range(samples):
        for p, action in zip(other_players, draws[s]):
            profile[p] = int(action)
        for j in range(game.k):
            profile[player] = j
            values[s, j] = game.utility(player, player_type, profile)
    return values.mean(axis=0), values.std(axis=0, ddof=1) / np.sqrt(samples)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def expected_utilities(
    game: BaseGame,
    player: int,
    profile_others: StrategyRows,
    mode: Union[str, LossMode] = "exact",
    rng: Optional[np.random.Generator] = None,
    player_type: Optional[PlayerType] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """E[u_i(j, a_-i)] for every action j, plus standard errors in Monte Carlo mode."""
    if not 0 <= player < game.n:
        raise ContractError(f"player {player} outside [0, {game.n})")
    mode = LossMode.parse(mode)
    others = _as_rows(profile_others, game.k)
    if others.shape[0] != game.n - 1:
        raise ContractError(f"expected {game.n - 1} opponent strategies, got {others.shape[0]}")
    ptype = game.types[player] if player_type is None else player_type
    if ptype == NULL_TYPE:
        zeros = np.zeros(game.k)
        return zeros, (zeros.copy() if mode.name == "monte_carlo" else None)
    if mode.name == "exact":
        return _exact_utilities(game, player, ptype, others), None
    if mode.name == "anonymous":
        return _anonymous_utilities(game, player, ptype, others), None
    if mode.name == "structured":
        values = game.structured_expected_utilities(player, ptype, others)
        if values is None:
            raise ContractError(f"game family {game.family!r} has no structured backend")
        return np.asarray(values, dtype=float), None
    return _monte_carlo_utilities(game, player, ptype, others, mode.samples, rng)


def expected_loss(
    game: BaseGame,
    player: int,
    profile_others: StrategyRows,
    mode: Union[str, LossMode] = "exact",
    rng: Optional[np.random.Generator] = None,
    player_type: Optional[PlayerType] = None,
) -> LossVector:
    """Loss vector ``1 - E[u_i(j, a_-i)]`` of ``player`` against a product profile of the others.

    Args:
        game: the game instance
        player: index of the player whose losses are computed
        profile_others: n-1 mixed strategies, in player order with ``player`` removed
        mode: backend name or LossMode
        rng: generator for monte_carlo mode
        player_type: evaluate the player's utility under this type instead of its own

    Returns:
        LossVector of length k with entries in [0, 1]
    """
    mode = LossMode.parse(mode)
    utilities, stderr = expected_utilities(game, player, profile_others, mode, rng, player_type)
    return LossVector(np.clip(1.0 - utilities, 0.0, 1.0), str(mode), stderr)


def utilities_all(
    game: BaseGame,
    profile: StrategyRows,
    mode: Union[str, LossMode] = "exact",
    rngs: Optional[Sequence[np.random.Generator]] = None,
    types: Optional[Sequence[PlayerType]] = None,
) -> np.ndarray:
    """Expected-utility table of shape (n, k) for every player against the full product profile."""
    mode = LossMode.parse(mode)
    rows = _as_rows(profile, game.k)
    if rows.shape[0] != game.n:
        raise ContractError(f"expected {game.n} strategies, got {rows.shape[0]}")
    types = game.types if types is None else tuple(types)
    if mode.name == "anonymous":
        if not game.aggregative:
            raise ContractError(f"anonymous mode requires an aggregative family, {game.family!r} is not")
        return _anonymous_utilities_all(game, rows, types)
    table = np.zeros((game.n, game.k))
    for i in range(game.n):
        others = np.delete(rows, i, axis=0)
        rng = rngs[i] if rngs is not None else None
        table[i], _ = expected_utilities(game, i, others, mode, rng, types[i])
    return table


def expected_losses_all(
    game: BaseGame,
    profile: StrategyRows,
    mode: Union[str, LossMode] = "exact",
    rngs: Optional[Sequence[np.random.Generator]] = None,
    types: Optional[Sequence[PlayerType]] = None,
) -> np.ndarray:
    return np.clip(1.0 - utilities_all(game, profile, mode, rngs, types), 0.0, 1.0)


def check_sensitivity(game: BaseGame, probes: int, seed: int) -> float:
    """Largest |u_i'(a_i, a_-i) - u_i'(a_i', a_-i)| over random probes with i != i'.

    Raises SensitivityViolation with the witness tuple when the declared gamma
    is exceeded.
    """
    if probes < 1:
        raise ContractError(f"probes must be at least 1, got {probes}")
    if game.n < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    movers = rng.integers(game.n, size=probes)
    observers = (movers + rng.integers(1, game.n, size=probes)) % game.n
    first = rng.integers(game.k, size=probes)
    second = rng.integers(game.k, size=probes)
    profiles = rng.integers(game.k, size=(probes, game.n))
    worst = 0.0
    for s in range(probes):
        i, i_prime = int(movers[s]), int(observers[s])
        profile = profiles[s].tolist()
        profile[i] = int(first[s])
        before = game.utility(i_prime, game.types[i_prime], profile)
        profile[i] = int(second[s])
        after = game.utility(i_prime, game.types[i_prime], profile)
        observed = abs(before - after)
        if observed > game.gamma + SENSITIVITY_TOL:
            profile[i] = int(first[s])
            raise SensitivityViolation(observed, game.gamma, (i, i_prime, int(first[s]), int(second[s]), tuple(profile)))
        worst = max(worst, observed)
    logger.debug("sensitivity probe on %s: max %.6g over %d probes", game.family, worst, probes)
    return worst
