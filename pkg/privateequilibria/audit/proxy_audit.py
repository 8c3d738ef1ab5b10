"""
Monte Carlo incentive audit of a recommender mechanism used as a proxy.

Each trial draws a type profile from a prior and a focal player, then
compares three branches for the focal player:

  (a) opt in and follow the recommendation;
  (b) opt in and remap each recommended action to its best reply
      (the per-action conditional optimum, which is the best swap);
  (c) opt out (report the null type) and play the best fixed action
      against the recommendations the others receive.

Branches (a) and (b) share one mechanism run. Branch (c) reruns the
mechanism with the same seed, so only the focal report differs.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import jsonlines
import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from privateequilibria.games.beach_mountain.beach_mountain_game import BeachMountainGame
from privateequilibria.mechanisms.naive_majority_mechanism import NaiveMajorityMechanism
from privateequilibria.src.base_game import NULL_TYPE, BaseGame, PlayerType
from privateequilibria.src.base_mechanism import BaseMechanism, MechanismRun
from privateequilibria.src.base_verifier import CorrelatedDistribution, resolve_verify_mode, verify
from privateequilibria.src.exceptions import ContractError
from privateequilibria.src.loss_oracle import expected_utilities

logger = logging.getLogger(__name__)

AUDIT_STREAM = 11
DISCARD_SLACK = 0.02
GAIN_TOL = 1e-9


class TypePrior:
    """
    Seeded sampler of type profiles.

    Specs:
      'uniform'         every type i.i.d. uniform over the universe
      'bernoulli:p'     first universe type with probability p, else the second
      'critical:m'      exactly m players of the second type, shuffled; the
                        focal player is drawn among them
      'fixed:a,b,...'   the given types, one per player
    """

    def __init__(self, kind: str, value: Any = None):
        self.kind = kind
        self.value = value

    @classmethod
    def parse(cls, spec: str) -> "TypePrior":
        kind, _, arg = spec.partition(":")
        if kind == "uniform" and not arg:
            return cls("uniform")
        if kind == "bernoulli" and arg:
            p = float(arg)
            if not 0.0 <= p <= 1.0:
                raise ContractError(f"bernoulli prior needs p in [0, 1], got {p}")
            return cls("bernoulli", p)
        if kind == "critical" and arg:
            m = int(arg)
            if m < 0:
                raise ContractError(f"critical prior needs m >= 0, got {m}")
            return cls("critical", m)
        if kind == "fixed" and arg:
            return cls("fixed", tuple(a.strip() for a in arg.split(",")))
        raise ContractError(f"cannot parse type prior {spec!r}; expected uniform, bernoulli:p, critical:m or fixed:a,b,...")

    @property
    def description(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "fixed":
            return "fixed:" + ",".join(self.value)
        return f"{self.kind}:{self.value}"

    def sample(self, game: BaseGame, rng: np.random.Generator) -> Tuple[List[PlayerType], int]:
        """A type profile for ``game``'s family and the focal player's index."""
        universe = game.type_universe
        n = game.n
        if self.kind == "uniform":
            types = [universe[v] for v in rng.integers(len(universe), size=n)]
        elif self.kind == "bernoulli":
            self._need_two(universe)
            types = [universe[0] if b else universe[1] for b in rng.random(n) < self.value]
        elif self.kind == "critical":
            self._need_two(universe)
            if self.value > n:
                raise ContractError(f"critical prior asks for {self.value} of {n} players")
            types = [universe[1]] * self.value + [universe[0]] * (n - self.value)
            types = [types[i] for i in rng.permutation(n)]
            pivotal = [i for i, t in enumerate(types) if t == universe[1]]
            if pivotal:
                return types, int(rng.choice(pivotal))
        else:
            if len(self.value) != n:
                raise ContractError(f"fixed prior lists {len(self.value)} types for n={n}")
            types = list(self.value)
        return types, int(rng.integers(n))

    @staticmethod
    def _need_two(universe: Sequence[PlayerType]) -> None:
        if len(universe) != 2:
            raise ContractError(f"prior needs a two-type universe, got {universe}")

    def __repr__(self) -> str:
        return f"TypePrior({self.description!r})"


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    focal: int
    focal_type: str
    seed: int
    discarded: bool
    truthful: float = math.nan
    swap: float = math.nan
    opt_out: float = math.nan
    best_fixed: float = math.nan
    alpha_ce: float = math.nan
    reason: str = ""

    @property
    def swap_gain(self) -> float:
        return self.swap - self.truthful

    @property
    def opt_out_gain(self) -> float:
        return self.opt_out - self.truthful

    @property
    def opt_out_excess(self) -> float:
        return self.opt_out - self.best_fixed

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        if not self.discarded:
            record.update(
                swap_gain=self.swap_gain, opt_out_gain=self.opt_out_gain, opt_out_excess=self.opt_out_excess
            )
        return {key: (None if isinstance(v, float) and math.isnan(v) else v) for key, v in record.items()}


class AuditReport(BaseModel):
    mechanism: str
    prior: str
    trials: int
    kept: int
    discarded: int
    discard_rate: float
    epsilon: float
    delta: float
    alpha: float
    eta_claimed: float
    swap_gain: float
    swap_stderr: float
    opt_out_gain: float
    opt_out_stderr: float
    opt_out_excess: float
    opt_out_excess_stderr: float
    max_deviation_gain: float
    stderr: float
    max_discard_rate: float

    @property
    def gain_within_bound(self) -> bool:
        return self.max_deviation_gain <= self.eta_claimed + 3.0 * self.stderr + GAIN_TOL

    @property
    def passed(self) -> bool:
        return self.gain_within_bound and self.discard_rate <= self.max_discard_rate

    def to_dict(self) -> Dict[str, Any]:
        data = self.model_dump()
        data["passed"] = self.passed
        return data


def focal_utility_table(dist: CorrelatedDistribution, game: BaseGame, focal: int, player_type: PlayerType) -> np.ndarray:
    """u[t, j]: expected utility of ``focal`` (holding ``player_type``) for action j against round t."""
    mode = resolve_verify_mode(game, "exact")
    table = np.zeros((dist.T, game.k))
    for t in range(dist.T):
        others = np.delete(dist.rounds[t], focal, axis=0)
        table[t], _ = expected_utilities(game, focal, others, mode, player_type=player_type)
    return table


def branch_values(dist: CorrelatedDistribution, table: np.ndarray, focal: int) -> Tuple[float, float, float]:
    """(follow, best swap, best fixed action) values of one focal utility table."""
    w = dist.probabilities
    pi = dist.rounds[:, focal, :]
    follow = float(np.einsum("t,tj,tj->", w, pi, table))
    conditional = (w[:, None] * pi).T @ table
    swap = float(conditional.max(axis=1).sum())
    best_fixed = float((w @ table).max())
    return follow, swap, best_fixed


def _usable(run) -> Optional[str]:
    if not getattr(run, "feasible", True):
        return run.message()
    if isinstance(run, MechanismRun) and run.failed:
        return f"{run.status} at round {run.failure_round}"
    return None


def run_trial(template: BaseGame, prior: TypePrior, mechanism: BaseMechanism, seed: int, trial: int) -> TrialRecord:
    rng = np.random.default_rng([seed, trial, AUDIT_STREAM])
    types, focal = prior.sample(template, rng)
    mech_seed = int(rng.integers(2**31 - 1))
    focal_type = types[focal]
    base = dict(trial=trial, focal=focal, focal_type=focal_type, seed=mech_seed)

    game = template.with_types(types)
    run = mechanism.run(game, mech_seed)
    reason = _usable(run)
    if reason is not None:
        return TrialRecord(discarded=True, reason=reason, **base)

    opted_out = list(types)
    opted_out[focal] = NULL_TYPE
    run_out = mechanism.run(template.with_types(opted_out), mech_seed)
    reason = _usable(run_out)
    if reason is not None:
        return TrialRecord(discarded=True, reason=f"opt-out run: {reason}", **base)

    truthful, swap, best_fixed = branch_values(
        run.distribution, focal_utility_table(run.distribution, game, focal, focal_type), focal
    )
    _, _, opt_out = branch_values(
        run_out.distribution, focal_utility_table(run_out.distribution, game, focal, focal_type), focal
    )
    alpha_ce = verify(run.distribution, game).alpha_ce
    return TrialRecord(
        truthful=truthful, swap=swap, opt_out=opt_out, best_fixed=best_fixed, alpha_ce=alpha_ce, discarded=False, **base
    )


def _mean_stderr(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def summarize(records: Sequence[TrialRecord], mechanism: BaseMechanism, prior: TypePrior) -> AuditReport:
    kept = [r for r in records if not r.discarded]
    if not kept:
        raise ContractError(f"every one of {len(records)} audit trials was discarded")
    swap_gain, swap_se = _mean_stderr(np.array([r.swap_gain for r in kept]))
    out_gain, out_se = _mean_stderr(np.array([r.opt_out_gain for r in kept]))
    excess, excess_se = _mean_stderr(np.array([r.opt_out_excess for r in kept]))
    alpha = float(np.mean([r.alpha_ce for r in kept]))
    budget = mechanism.budget if mechanism.private else None
    epsilon = 0.0 if budget is None else budget.epsilon
    delta = 0.0 if budget is None else budget.delta
    if swap_gain >= out_gain:
        max_gain, stderr = swap_gain, swap_se
    else:
        max_gain, stderr = out_gain, out_se
    discarded = len(records) - len(kept)
    return AuditReport(
        mechanism=mechanism.name,
        prior=prior.description,
        trials=len(records),
        kept=len(kept),
        discarded=discarded,
        discard_rate=discarded / len(records),
        epsilon=epsilon,
        delta=delta,
        alpha=alpha,
        eta_claimed=epsilon + delta + alpha,
        swap_gain=swap_gain,
        swap_stderr=swap_se,
        opt_out_gain=out_gain,
        opt_out_stderr=out_se,
        opt_out_excess=excess,
        opt_out_excess_stderr=excess_se,
        max_deviation_gain=max_gain,
        stderr=stderr,
        max_discard_rate=mechanism.beta + DISCARD_SLACK,
    )


def audit(
    game: BaseGame,
    prior: TypePrior,
    mechanism: BaseMechanism,
    trials: int,
    seed: int = 0,
    workers: int = 1,
    trial_log: Optional[str] = None,
    progress: bool = False,
) -> AuditReport:
    """
    Estimate the focal player's best deviation gain over ``trials`` paired trials.

    Args:
        game: template instance; only its family and size are used, types come from the prior
        prior: type prior
        mechanism: configured mechanism; its budget and beta enter the claimed eta
        trials: number of trials, at least 1
        seed: root seed; trial t draws from its own stream
        workers: thread count
        trial_log: optional JSONL path receiving one record per trial
    """
    if trials < 1:
        raise ContractError(f"trials must be at least 1, got {trials}")
    logger.info("auditing %s on %s, prior %s, %d trials", mechanism.name, game.family, prior.description, trials)

    def one(trial: int) -> TrialRecord:
        return run_trial(game, prior, mechanism, seed, trial)

    indices = range(trials)
    if workers > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            records = list(tqdm(ex.map(one, indices), total=trials, desc="audit", disable=not progress))
    else:
        records = [one(t) for t in tqdm(indices, desc="audit", disable=not progress)]

    if trial_log:
        with jsonlines.open(trial_log, mode="w") as writer:
            for record in records:
                writer.write(record.to_dict())

    for record in records:
        if record.discarded:
            logger.warning("trial %d discarded: %s", record.trial, record.reason)
    report = summarize(records, mechanism, prior)
    if report.discard_rate > report.max_discard_rate:
        logger.warning("discard rate %.3f exceeds %.3f", report.discard_rate, report.max_discard_rate)
    return report


def beach_counterexample(
    n: int = 101,
    mountain_types: Optional[int] = None,
    mechanism: Optional[BaseMechanism] = None,
    trials: int = 1,
    seed: int = 0,
    null_action: Optional[int] = None,
) -> AuditReport:
    """
    Opt-out audit of the beach/mountain game on a near-critical prior.

    With the default naive majority rule and mountain types just in the
    majority, a mountain type who opts out tips the rule toward the mountain
    and gains half the payoff range. Pass a private mechanism to measure it
    on the same prior.
    """
    if n % 2 == 0:
        raise ContractError(f"beach counterexample needs odd n, got {n}")
    if mountain_types is None:
        mountain_types = (n + 1) // 2
    template = BeachMountainGame.from_config(n, beach_types=n, null_action=null_action)
    mechanism = mechanism or NaiveMajorityMechanism()
    return audit(template, TypePrior("critical", mountain_types), mechanism, trials, seed)


__all__ = [
    "AuditReport",
    "TrialRecord",
    "TypePrior",
    "audit",
    "beach_counterexample",
    "branch_values",
    "focal_utility_table",
]
