"""NRMedian at desk scale.

Each round the mechanism answers Q^j_{i,t,v}: the expected loss of player i
playing j while holding type v, with every other player following the
learner fed by the shared table under that player's type. A median
mechanism over the net of all U^n type tuples answers these queries; the
answers form the shared table, and player i runs its learner on the slice
for its own type.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from privateequilibria.src.base_game import NULL_TYPE, BaseGame, MixedStrategy, PlayerType
from privateequilibria.src.base_learner import SWAP, PlaySequence, default_eta, make_learner, run_learner
from privateequilibria.src.base_mechanism import STATUS_MEDIAN_FAILURE, STATUS_OK, BaseMechanism, MechanismRun
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import ContractError, MedianFailure
from privateequilibria.src.loss_oracle import LossMode, expected_loss, resolve_loss_mode
from privateequilibria.src.privacy import (
    DEFAULT_T_CAP,
    Infeasible,
    PrivacyBudget,
    PrivacyLedger,
    laplace_sample,
    median_hard_cap,
    median_plan_for_T,
    plan_for_nrmedian,
    predicted_alpha_median,
)

logger = logging.getLogger(__name__)

MEDIAN_STREAM = 7
NET_SIZE_CAP = 10**6
NET_CONSTRAINT = "U^n <= 1e6 candidate type tuples"

Query = Tuple[int, int, int, int]


@dataclass
class CandidateNet:
    """All U^n type tuples in lexicographic order, each live or pruned."""

    universe: Tuple[PlayerType, ...]
    candidates: np.ndarray
    live: np.ndarray

    @classmethod
    def enumerate(cls, universe: Sequence[PlayerType], n: int) -> "CandidateNet":
        universe = tuple(universe)
        size = len(universe) ** n
        if size > NET_SIZE_CAP:
            raise ContractError(f"net of {size} candidates exceeds the cap of {NET_SIZE_CAP}")
        candidates = np.array(list(itertools.product(range(len(universe)), repeat=n)), dtype=np.int64)
        return cls(universe, candidates.reshape(size, n), np.ones(size, dtype=bool))

    @property
    def size(self) -> int:
        return self.candidates.shape[0]

    @property
    def U(self) -> int:
        return len(self.universe)

    @property
    def live_count(self) -> int:
        return int(self.live.sum())

    def encode(self, types: Sequence[PlayerType]) -> Tuple[int, ...]:
        try:
            return tuple(self.universe.index(t) for t in types)
        except ValueError as e:
            raise ContractError(f"type tuple {tuple(types)} is not in the net universe {self.universe}") from e

    def index_of(self, type_ids: Sequence[int]) -> int:
        index = 0
        for v in type_ids:
            index = index * self.U + int(v)
        return index

    def live_indices(self) -> np.ndarray:
        return np.flatnonzero(self.live)


@dataclass
class SharedLossTable:
    """Answers[t, i, j, v] for completed rounds; the same object is handed to every player."""

    universe: Tuple[PlayerType, ...]
    answers: np.ndarray
    rounds_filled: int = 0

    @classmethod
    def empty(cls, T: int, n: int, k: int, universe: Sequence[PlayerType]) -> "SharedLossTable":
        return cls(tuple(universe), np.full((T, n, k, len(universe)), np.nan))

    @property
    def T(self) -> int:
        return self.answers.shape[0]

    @property
    def k(self) -> int:
        return self.answers.shape[2]

    def complete_round(self, t: int) -> None:
        if t != self.rounds_filled:
            raise ContractError(f"round {t} completed out of order, {self.rounds_filled} rounds filled")
        if np.isnan(self.answers[t]).any():
            raise ContractError(f"round {t} has unanswered queries")
        self.rounds_filled += 1

    def history(self, t: int) -> np.ndarray:
        """Rows for rounds 0..t-1."""
        if t > self.rounds_filled:
            raise ContractError(f"history through round {t} requested, only {self.rounds_filled} rounds filled")
        return self.answers[:t]

    def slice(self, player: int, type_id: int) -> np.ndarray:
        return self.answers[: self.rounds_filled, player, :, type_id]

    def to_dict(self) -> dict:
        return {
            "universe": list(self.universe),
            "rounds": self.rounds_filled,
            "answers": self.answers[: self.rounds_filled].tolist(),
        }


@dataclass(frozen=True)
class MedianCalibration:
    """Noise scales and thresholds from an even split of the budget across the hard-query cap."""

    hard_cap: int
    epsilon_hard: float
    queries: int
    sigma_threshold: float
    sigma_compare: float
    sigma_answer: float
    tau_keep: float
    margin: float
    tau_hard: float

    @classmethod
    def for_run(cls, n: int, k: int, U: int, T: int, gamma: float, budget: PrivacyBudget, beta: float):
        cap = median_hard_cap(n, U)
        epsilon_hard = budget.epsilon / math.sqrt(8.0 * cap * math.log(1.0 / budget.delta))
        queries = n * k * T * U
        log_term = math.log(2.0 * queries / beta)
        sigma_threshold = 4.0 * gamma / epsilon_hard
        sigma_compare = 8.0 * gamma / epsilon_hard
        sigma_answer = 2.0 * gamma / epsilon_hard
        tau_keep = sigma_answer * log_term
        margin = (sigma_compare + sigma_threshold) * log_term
        return cls(
            hard_cap=cap,
            epsilon_hard=epsilon_hard,
            queries=queries,
            sigma_threshold=sigma_threshold,
            sigma_compare=sigma_compare,
            sigma_answer=sigma_answer,
            tau_keep=tau_keep,
            margin=margin,
            tau_hard=2.0 * tau_keep + margin,
        )

    @property
    def answer_bound(self) -> float:
        """Error of any answer outside the failure event."""
        return self.tau_hard + self.margin


@dataclass
class MedianState:
    calibration: MedianCalibration
    threshold_noise: float = 0.0
    round_index: int = 0
    hard: int = 0
    easy: int = 0
    max_error: float = 0.0


def median_answer(
    net: CandidateNet,
    values: np.ndarray,
    true_value: float,
    state: MedianState,
    rng: np.random.Generator,
) -> Tuple[float, bool]:
    """
    Answer one query through the median mechanism.

    Args:
        net: candidate net; pruned in place on hard queries
        values: query value at every live candidate, in ``net.live_indices()`` order
        true_value: query value at the reported type tuple
        state: thresholds, threshold noise and counters; updated in place
        rng: the mechanism's noise stream

    Returns:
        (answer, hard) where hard tells whether the query was answered from the data

    Raises:
        MedianFailure: the hard-query cap is exhausted or every candidate is pruned
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ContractError("median answer needs at least one live candidate")
    cal = state.calibration
    hard = False
    if values.max() == values.min():
        answer = float(values[0])
        state.easy += 1
    else:
        median = float(np.median(values))
        distance = abs(true_value - median) + laplace_sample(cal.sigma_compare, rng)
        if distance <= cal.tau_hard + state.threshold_noise:
            answer = median
            state.easy += 1
        else:
            hard = True
            state.hard += 1
            if state.hard > cal.hard_cap:
                raise MedianFailure(f"hard-query cap {cal.hard_cap} exhausted", state.round_index)
            answer = true_value + laplace_sample(cal.sigma_answer, rng)
            live = net.live_indices()
            net.live[live[np.abs(values - answer) > cal.tau_keep]] = False
            if not net.live.any():
                raise MedianFailure("every candidate was pruned", state.round_index)
            state.threshold_noise = laplace_sample(cal.sigma_threshold, rng)
    state.max_error = max(state.max_error, abs(answer - true_value))
    return answer, hard


def learner_losses(answers: np.ndarray) -> np.ndarray:
    """Map raw answers onto the learner scale (a + 1) / 3, clamped into [0, 1]."""
    return np.clip((np.asarray(answers, dtype=float) + 1.0) / 3.0, 0.0, 1.0)


def _is_pinned(game: BaseGame, player_type: PlayerType) -> bool:
    return player_type == NULL_TYPE and game.null_action is not None


def strategies_at(game: BaseGame, table: SharedLossTable, t: int, learner: str = SWAP) -> np.ndarray:
    """Strategy of every (player, type) learner at round t, rebuilt from the table; shape (n, U, k)."""
    history = table.history(t)
    n, U, k = game.n, len(table.universe), game.k
    eta = default_eta(k, table.T)
    strategies = np.empty((n, U, k))
    for i in range(n):
        for v, player_type in enumerate(table.universe):
            if _is_pinned(game, player_type):
                strategies[i, v] = np.asarray(MixedStrategy.point_mass(k, game.null_action))
            else:
                strategies[i, v] = run_learner(learner, learner_losses(history[:, i, :, v]), eta).states[-1]
    return strategies


def _deterministic_mode(game: BaseGame, loss_mode) -> LossMode:
    mode = resolve_loss_mode(game, loss_mode)
    if mode.name == "monte_carlo":
        raise ContractError("the median mechanism needs a deterministic loss backend, not monte_carlo")
    return mode


def query_value(
    game: BaseGame,
    q: Query,
    true_types: Sequence[int],
    table: SharedLossTable,
    learner: str = SWAP,
    loss_mode: Optional[Union[str, LossMode]] = None,
) -> float:
    """Value of Q^j_{i,t,v} on a type tuple (indices into the table's universe).

    The others follow their learners on their own slices; the queried player's
    own entry of ``true_types`` is never read.
    """
    i, j, t, v = q
    mode = _deterministic_mode(game, loss_mode)
    strategies = strategies_at(game, table, t, learner)
    others = [strategies[p, true_types[p]] for p in range(game.n) if p != i]
    return float(expected_loss(game, i, others, mode, player_type=table.universe[v]).values[j])


def _universe_for(game: BaseGame, universe: Optional[Sequence[PlayerType]] = None) -> Tuple[PlayerType, ...]:
    """Candidate types of the net: the game's universe unless a subset is given, plus the null type when reported."""
    if universe is None:
        universe = tuple(game.type_universe)
    else:
        universe = tuple(universe)
        unknown = [t for t in universe if t not in game.type_universe and t != NULL_TYPE]
        if not universe or len(set(universe)) != len(universe) or unknown:
            raise ContractError(f"candidate universe {universe} must be a duplicate-free subset of {game.type_universe}")
    if NULL_TYPE in game.types and NULL_TYPE not in universe:
        universe = universe + (NULL_TYPE,)
    return universe


def run_nrmedian(
    game: BaseGame,
    budget: PrivacyBudget,
    beta: float,
    learner: str = SWAP,
    seed: int = 0,
    T: Optional[int] = None,
    loss_mode: Optional[Union[str, LossMode]] = None,
    T_cap: int = DEFAULT_T_CAP,
    progress: bool = False,
    universe: Optional[Sequence[PlayerType]] = None,
) -> Union[MechanismRun, Infeasible]:
    n, k = game.n, game.k
    universe = _universe_for(game, universe)
    U = len(universe)
    if U**n > NET_SIZE_CAP:
        return Infeasible(NET_CONSTRAINT, float(U**n), float(NET_SIZE_CAP), 1, f"U={U}, n={n}")
    if T is None:
        plan = plan_for_nrmedian(n, k, U, game.gamma, budget.epsilon, budget.delta, beta, T_cap)
        if isinstance(plan, Infeasible):
            logger.info("NRMedian infeasible: %s", plan.message())
            return plan
    else:
        plan = median_plan_for_T(n, k, U, game.gamma, budget.epsilon, budget.delta, beta, T)
        if not plan.satisfies_constraint:
            logger.warning("explicit T=%d violates the median constraint: alpha=%.6g > 1/6", T, plan.alpha_mm)
    T = plan.T
    mode = _deterministic_mode(game, loss_mode)
    calibration = MedianCalibration.for_run(n, k, U, T, game.gamma, budget, beta)
    logger.info(
        "NRMedian: n=%d k=%d U=%d T=%d hard cap %d loss backend %s", n, k, U, T, calibration.hard_cap, mode
    )

    net = CandidateNet.enumerate(universe, n)
    true_ids = net.encode(game.types)
    table = SharedLossTable.empty(T, n, k, universe)
    rng = np.random.default_rng([seed, MEDIAN_STREAM])
    state = MedianState(calibration, threshold_noise=laplace_sample(calibration.sigma_threshold, rng))

    learners: Dict[Tuple[int, int], object] = {}
    strategies = np.empty((n, U, k))
    for i in range(n):
        for v, player_type in enumerate(universe):
            if _is_pinned(game, player_type):
                strategies[i, v] = np.asarray(MixedStrategy.point_mass(k, game.null_action))
            else:
                learners[(i, v)] = make_learner(learner, k, T)
                strategies[i, v] = learners[(i, v)].current

    states = np.empty((n, T + 1, k))
    states[:, 0] = strategies[np.arange(n), true_ids]
    profiles = np.empty((T, n, k))
    true_losses = np.empty((n, T, k))
    noisy_losses = np.empty((n, T, k))
    clamp_counts = np.zeros((n, T), dtype=np.int64)
    status, failure_round = STATUS_OK, None

    for t in tqdm(range(T), desc="NRMedian rounds", disable=not progress):
        state.round_index = t
        profiles[t] = strategies[np.arange(n), true_ids]
        cache: Dict[Tuple[int, int, Tuple[int, ...]], np.ndarray] = {}

        def loss_vector(i: int, v: int, key: Tuple[int, ...]) -> np.ndarray:
            if (i, v, key) not in cache:
                others = [p for p in range(n) if p != i]
                rows = strategies[others, list(key)] if others else np.zeros((0, k))
                cache[(i, v, key)] = expected_loss(game, i, rows, mode, player_type=universe[v]).values
            return cache[(i, v, key)]

        try:
            for i in range(n):
                others = [p for p in range(n) if p != i]
                true_key = tuple(true_ids[p] for p in others)
                for v in range(U):
                    live = net.live_indices()
                    values = np.array([loss_vector(i, v, tuple(row)) for row in net.candidates[live][:, others]])
                    true_vector = loss_vector(i, v, true_key)
                    for j in range(k):
                        still = net.live[live]
                        answer, _ = median_answer(net, values[still, j], float(true_vector[j]), state, rng)
                        table.answers[t, i, j, v] = answer
                true_losses[i, t] = loss_vector(i, true_ids[i], true_key)
        except MedianFailure as e:
            logger.warning("NRMedian failed: %s", e)
            status, failure_round = STATUS_MEDIAN_FAILURE, t
            break
        table.complete_round(t)

        for i in range(n):
            noisy_losses[i, t] = (table.answers[t, i, :, true_ids[i]] + 1.0) / 3.0
            row = noisy_losses[i, t]
            clamp_counts[i, t] = np.count_nonzero((row < 0.0) | (row > 1.0))
        for (i, v), model in learners.items():
            strategies[i, v] = model.update(learner_losses(table.answers[t, i, :, v]))
        states[:, t + 1] = strategies[np.arange(n), true_ids]

    completed = table.rounds_filled
    rounds = T if status == STATUS_OK else max(completed, 1)
    ledger = PrivacyLedger(calibration.epsilon_hard, budget.delta)
    ledger.record(state.hard, "hard_query")
    sequences = tuple(
        None if _is_pinned(game, game.types[i]) else PlaySequence(states[i, : completed + 1]) for i in range(n)
    )
    stats = {
        "hard": state.hard,
        "easy": state.easy,
        "hard_cap": calibration.hard_cap,
        "net_size": net.size,
        "live_at_exit": net.live_count,
        "true_live": bool(net.live[net.index_of(true_ids)]),
        "max_answer_error": state.max_error,
        "answer_bound": calibration.answer_bound,
        "alpha_mm": plan.alpha_mm,
        "clamped": int(clamp_counts.sum()),
    }
    return MechanismRun(
        mechanism=MedianMechanism.name,
        game=game,
        distribution=CorrelatedDistribution(profiles[:rounds]),
        sequences=sequences,
        true_losses=true_losses[:, :completed],
        noisy_losses=noisy_losses[:, :completed],
        clamp_counts=clamp_counts[:, :completed],
        plan=plan,
        params={
            "epsilon": budget.epsilon,
            "delta": budget.delta,
            "beta": beta,
            "learner": learner,
            "seed": seed,
            "T": T,
            "universe": list(universe),
        },
        predicted_alpha=predicted_alpha_median(k, T, plan.alpha_mm),
        loss_mode=str(mode),
        status=status,
        failure_round=failure_round,
        ledger=ledger,
        stats=stats,
        table=table,
    )


class MedianMechanism(BaseMechanism):
    name = "median"

    def __init__(self, *args, universe: Optional[Sequence[PlayerType]] = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.universe = None if universe is None else tuple(universe)

    def run(self, game: BaseGame, seed: int) -> Union[MechanismRun, Infeasible]:
        if self.budget is None:
            raise ContractError("the median mechanism needs a privacy budget")
        return run_nrmedian(
            game,
            self.budget,
            self.beta,
            learner=self.learner,
            seed=seed,
            T=self.T,
            loss_mode=self.loss_mode,
            T_cap=self.T_cap or DEFAULT_T_CAP,
            progress=self.verbose,
            universe=self.universe,
        )
