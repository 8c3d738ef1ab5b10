import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from privateequilibria.src.base_game import NULL_TYPE, BaseGame
from privateequilibria.src.base_learner import FIXED, LEARNERS, SWAP, PlaySequence
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import ContractError
from privateequilibria.src.loss_oracle import LossMode, expected_losses_all
from privateequilibria.src.privacy import Infeasible, PrivacyBudget, PrivacyLedger

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_MEDIAN_FAILURE = "median_failure"

# (game, profile (n, k), mode, rngs, types) -> losses (n, k)
LossOracle = Callable[..., np.ndarray]


@dataclass(frozen=True)
class MechanismRun:
    """Outcome of one mechanism execution. Immutable once returned.

    ``sequences[i]`` is None for a player pinned to its null action. Arrays
    indexed by player have shape (n, T, k): ``true_losses`` on the [0, 1]
    scale, ``noisy_losses`` as fed to the learners before clamping.
    """

    mechanism: str
    game: BaseGame
    distribution: CorrelatedDistribution
    sequences: Tuple[Optional[PlaySequence], ...] = ()
    true_losses: Optional[np.ndarray] = None
    noisy_losses: Optional[np.ndarray] = None
    clamp_counts: Optional[np.ndarray] = None
    plan: Any = None
    params: Dict[str, Any] = field(default_factory=dict)
    predicted_alpha: float = 0.0
    loss_mode: str = ""
    status: str = STATUS_OK
    failure_round: Optional[int] = None
    ledger: Optional[PrivacyLedger] = None
    stats: Dict[str, Any] = field(default_factory=dict)
    table: Any = None

    feasible = True

    @property
    def n(self) -> int:
        return self.game.n

    @property
    def T(self) -> int:
        return self.distribution.T

    @property
    def failed(self) -> bool:
        return self.status != STATUS_OK

    @property
    def clamped_total(self) -> int:
        return 0 if self.clamp_counts is None else int(self.clamp_counts.sum())

    def manifest(self) -> Dict[str, Any]:
        """Flat run parameters first; the full plan, params and ledger are kept nested alongside."""
        plan = asdict(self.plan) if is_dataclass(self.plan) else None
        per_step_epsilon = getattr(self.plan, "per_step_epsilon", None)
        if per_step_epsilon is None and self.ledger is not None:
            per_step_epsilon = self.ledger.per_step_epsilon
        return {
            "mechanism": self.mechanism,
            "status": self.status,
            "failure_round": self.failure_round,
            "epsilon": self.params.get("epsilon"),
            "delta": self.params.get("delta"),
            "beta": self.params.get("beta"),
            "gamma": self.game.gamma,
            "n": self.game.n,
            "k": self.game.k,
            "T": self.T,
            "sigma": getattr(self.plan, "sigma", None),
            "per_step_epsilon": per_step_epsilon,
            "ledger_draws": 0 if self.ledger is None else self.ledger.draws,
            "plan": plan,
            "params": dict(self.params),
            "predicted_alpha": self.predicted_alpha,
            "loss_mode": self.loss_mode,
            "clamped": self.clamped_total,
            "ledger": None if self.ledger is None else self.ledger.to_dict(),
            "stats": dict(self.stats),
        }


@dataclass(frozen=True)
class JointView:
    """Everything a mechanism hands to the players other than ``player``."""

    player: int
    sequences: Tuple[Optional[PlaySequence], ...]
    noisy_losses: Optional[np.ndarray]

    def extend(self, sequence: Optional[PlaySequence], noisy_losses: Optional[np.ndarray] = None):
        """Re-insert the removed player's outputs; returns (sequences, noisy_losses) for all n players."""
        sequences = self.sequences[: self.player] + (sequence,) + self.sequences[self.player :]
        if self.noisy_losses is None or noisy_losses is None:
            return sequences, None
        return sequences, np.insert(self.noisy_losses, self.player, noisy_losses, axis=0)


def joint_view(run: MechanismRun, player: int) -> JointView:
    if not 0 <= player < run.n:
        raise ContractError(f"player {player} outside [0, {run.n})")
    sequences = run.sequences[:player] + run.sequences[player + 1 :]
    noisy = None if run.noisy_losses is None else np.delete(run.noisy_losses, player, axis=0)
    return JointView(player, sequences, noisy)


class RecordingOracle:
    """Wraps a loss oracle and keeps a copy of every profile it was asked about, one entry per round."""

    def __init__(self, oracle: LossOracle = expected_losses_all):
        self.oracle = oracle
        self.profiles: List[np.ndarray] = []
        self.losses: List[np.ndarray] = []

    def __call__(self, game, profile, mode, rngs=None, types=None) -> np.ndarray:
        self.profiles.append(np.array(profile, dtype=float, copy=True))
        losses = self.oracle(game, profile, mode, rngs, types)
        self.losses.append(np.array(losses, copy=True))
        return losses


def pinned_players(game: BaseGame) -> List[int]:
    """Players reporting the null type in a family that fixes their action."""
    if game.null_action is None:
        return []
    return [i for i, t in enumerate(game.types) if t == NULL_TYPE]


def round_rng(seed: int, t: int, player: int, stream: int = 0) -> np.random.Generator:
    """Independent generator per (seed, round, player, stream)."""
    return np.random.default_rng([seed, t, player, stream])


class BaseMechanism(ABC):
    """A recommender: reads the reported types of a game and returns a MechanismRun.

    Subclasses implement ``run``. The constructor fixes every parameter the
    run needs besides the game and the seed, so one instance can serve
    many audit trials.
    """

    name: str = ""
    private: bool = True

    def __init__(
        self,
        budget: Optional[PrivacyBudget] = None,
        beta: float = 0.05,
        learner: str = SWAP,
        T: Optional[int] = None,
        loss_mode: Optional[Union[str, LossMode]] = None,
        T_cap: Optional[int] = None,
        verbose: bool = False,
    ):
        if learner not in LEARNERS:
            raise ContractError(f"unknown learner {learner!r}; expected one of {LEARNERS}")
        if not 0 < beta < 1:
            raise ContractError(f"beta must lie in (0, 1), got {beta}")
        if T is not None and T < 1:
            raise ContractError(f"explicit T must be positive, got {T}")
        self.budget = budget
        self.beta = beta
        self.learner = learner
        self.T = T
        self.loss_mode = loss_mode
        self.T_cap = T_cap
        self.verbose = verbose

    @abstractmethod
    def run(self, game: BaseGame, seed: int) -> Union[MechanismRun, Infeasible]:
        """Execute the mechanism on the types stored in ``game``."""
        pass

    def describe(self) -> Dict[str, Any]:
        params: Dict[str, Any] = {
            "mechanism": self.name,
            "beta": self.beta,
            "learner": self.learner,
            "T": "auto" if self.T is None else self.T,
            "loss_mode": None if self.loss_mode is None else str(self.loss_mode),
        }
        if self.budget is not None:
            params["epsilon"] = self.budget.epsilon
            params["delta"] = self.budget.delta
        return params


__all__ = [
    "BaseMechanism",
    "FIXED",
    "JointView",
    "MechanismRun",
    "RecordingOracle",
    "STATUS_MEDIAN_FAILURE",
    "STATUS_OK",
    "SWAP",
    "joint_view",
    "pinned_players",
    "round_rng",
]
