"""Laplace noise, composition accounting and the round-count planners.

All logarithms are natural logarithms.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np

from privateequilibria.src.exceptions import ContractError

logger = logging.getLogger(__name__)

DEFAULT_T_CAP = 10**6
STANDARD = "standard"
JOINT = "joint"


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    """One draw from Lap(scale) by inverting the CDF of a uniform draw on (-1/2, 1/2)."""
    return float(laplace_noise(scale, (), rng))


def laplace_noise(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``laplace_sample``; a zero scale yields exact zeros without consuming randomness."""
    if scale < 0:
        raise ContractError(f"Laplace scale must be nonnegative, got {scale}")
    if scale == 0:
        return np.zeros(size)
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def compose_advanced(eps0: float, delta0: float, T: int, delta_prime: float) -> Tuple[float, float]:
    """Adaptive composition of T (eps0, delta0) steps with slack delta_prime."""
    if eps0 < 0 or delta0 < 0 or T < 1 or not 0 < delta_prime < 1:
        raise ContractError(
            f"compose_advanced needs eps0 >= 0, delta0 >= 0, T >= 1, delta' in (0,1); "
            f"got {eps0}, {delta0}, {T}, {delta_prime}"
        )
    eps_total = eps0 * math.sqrt(2.0 * T * math.log(1.0 / delta_prime)) + T * eps0 * math.expm1(eps0)
    return eps_total, T * delta0 + delta_prime


def per_step_epsilon(epsilon: float, delta: float, T: int) -> float:
    """epsilon / sqrt(8 T ln(1/delta)): the per-step budget under the simplified composition rule."""
    if T < 1 or not 0 < delta < 1:
        raise ContractError(f"per_step_epsilon needs T >= 1 and delta in (0,1), got T={T}, delta={delta}")
    return epsilon / math.sqrt(8.0 * T * math.log(1.0 / delta))


def concentration_bound(sigma: float, T: int, alpha: float) -> float:
    """exp(-alpha^2 T / (6 sigma^2)), valid for 0 < alpha <= sigma."""
    if not 0 < alpha <= sigma:
        raise ContractError(f"concentration bound needs 0 < alpha <= sigma, got alpha={alpha}, sigma={sigma}")
    return math.exp(-alpha * alpha * T / (6.0 * sigma * sigma))


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    kind: str = JOINT

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ContractError(f"delta must lie in (0, 1), got {self.delta}")
        if self.kind not in (STANDARD, JOINT):
            raise ContractError(f"unknown budget kind {self.kind!r}")

    @property
    def simplified_rule_applies(self) -> bool:
        return self.epsilon <= 1.0


@dataclass(frozen=True)
class Infeasible:
    """Structured infeasibility: the named constraint fails even at the smallest admissible T."""

    constraint: str
    lhs: float
    rhs: float
    T: int
    reason: str = ""

    feasible = False

    def message(self) -> str:
        text = f"infeasible: {self.constraint} at T={self.T}: lhs={self.lhs!r} > rhs={self.rhs!r}"
        return f"{text} ({self.reason})" if self.reason else text

    def to_dict(self) -> dict:
        return {
            "status": "infeasible",
            "constraint": self.constraint,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "T": self.T,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class NoisePlan:
    """Round count and Laplace scale for NRLaplace."""

    T: int
    sigma: float
    per_step_epsilon: float
    steps: int
    lhs: float
    rhs: float
    capped: bool = False
    seed: Optional[int] = None

    feasible = True

    @property
    def satisfies_constraint(self) -> bool:
        return self.lhs <= self.rhs


@dataclass(frozen=True)
class MedianPlan:
    T: int
    alpha_mm: float
    queries: int
    hard_cap: int
    lhs: float
    rhs: float
    capped: bool = False

    feasible = True

    @property
    def satisfies_constraint(self) -> bool:
        return self.lhs <= self.rhs


PlanResult = Union[NoisePlan, Infeasible]
MedianPlanResult = Union[MedianPlan, Infeasible]

NRLAPLACE_CONSTRAINT = "gamma/eps * sqrt(8 n k T ln(1/delta)) <= 1 / (6 ln(4 n k T / beta))"
NRMEDIAN_CONSTRAINT = "16/eps * gamma * sqrt(n ln U) * ln(2 n k T U / beta) * ln(4/delta) <= 1/6"


def nrlaplace_sigma(n: int, k: int, gamma: float, epsilon: float, delta: float, T: int) -> float:
    return gamma / epsilon * math.sqrt(8.0 * n * k * T * math.log(1.0 / delta))


def _nrlaplace_sides(n, k, gamma, epsilon, delta, beta, T) -> Tuple[float, float]:
    return nrlaplace_sigma(n, k, gamma, epsilon, delta, T), 1.0 / (6.0 * math.log(4.0 * n * k * T / beta))


def largest_feasible_T(margin: Callable[[int], float], T_cap: int) -> Optional[int]:
    """Largest T in [1, T_cap] with margin(T) >= 0, for a margin nonincreasing in T.

    Doubling finds a bracket, binary search closes it. None when T=1 fails.
    """
    if margin(1) < 0:
        return None
    lo = 1
    while lo < T_cap:
        hi = min(2 * lo, T_cap)
        if margin(hi) < 0:
            break
        lo = hi
    else:
        return T_cap
    # margin(lo) >= 0 > margin(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if margin(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def _check_common(n, k, epsilon, delta, beta) -> str:
    if n < 1 or k < 2:
        return f"need n >= 1 and k >= 2, got n={n}, k={k}"
    if not epsilon > 0:
        return f"epsilon must be positive, got {epsilon}"
    if not 0 < delta < 1:
        return f"delta must lie in (0, 1), got {delta}"
    if not 0 < beta < 1:
        return f"beta must lie in (0, 1), got {beta}"
    return ""


def nrlaplace_plan_for_T(
    n: int, k: int, gamma: float, epsilon: float, delta: float, beta: float, T: int, capped: bool = False
) -> NoisePlan:
    """The NoisePlan induced by a given T, whether or not it satisfies the constraint."""
    lhs, rhs = _nrlaplace_sides(n, k, gamma, epsilon, delta, beta, T)
    steps = n * k * T
    eps_step = gamma / lhs if lhs > 0 else 0.0
    return NoisePlan(T=T, sigma=lhs, per_step_epsilon=eps_step, steps=steps, lhs=lhs, rhs=rhs, capped=capped)


def plan_for_nrlaplace(
    n: int, k: int, gamma: float, epsilon: float, delta: float, beta: float, T_cap: int = DEFAULT_T_CAP
) -> PlanResult:
    """Largest T satisfying the NRLaplace accuracy constraint, with the induced sigma."""
    problem = _check_common(n, k, epsilon, delta, beta)
    if problem:
        return Infeasible(NRLAPLACE_CONSTRAINT, math.inf, 0.0, 1, problem)
    if gamma < 0:
        return Infeasible(NRLAPLACE_CONSTRAINT, math.inf, 0.0, 1, f"gamma must be nonnegative, got {gamma}")

    def margin(T: int) -> float:
        lhs, rhs = _nrlaplace_sides(n, k, gamma, epsilon, delta, beta, T)
        return rhs - lhs

    T = largest_feasible_T(margin, T_cap)
    if T is None:
        lhs, rhs = _nrlaplace_sides(n, k, gamma, epsilon, delta, beta, 1)
        return Infeasible(NRLAPLACE_CONSTRAINT, lhs, rhs, 1)
    plan = nrlaplace_plan_for_T(n, k, gamma, epsilon, delta, beta, T, capped=(T == T_cap))
    logger.debug("NRLaplace plan: T=%d sigma=%.6g", plan.T, plan.sigma)
    return plan


def predicted_alpha_laplace(n: int, k: int, gamma: float, epsilon: float, delta: float, beta: float, T: int) -> float:
    """3 * (sqrt(2 ln k / T) + gamma k sqrt(192 n ln(1/delta) ln(4 n k / beta)) / eps)."""
    regret = math.sqrt(2.0 * math.log(k) / T)
    noise = gamma * k * math.sqrt(192.0 * n * math.log(1.0 / delta) * math.log(4.0 * n * k / beta)) / epsilon
    return 3.0 * (regret + noise)


def median_hard_cap(n: int, U: int) -> int:
    return int(math.floor(20.0 * n * math.log(U))) + 1


def alpha_median(n: int, k: int, U: int, T: int, gamma: float, epsilon: float, delta: float, beta: float) -> float:
    """16/eps * gamma * sqrt(n ln U) * ln(2R/beta) * ln(4/delta) with R = n k T U queries."""
    R = n * k * T * U
    return 16.0 / epsilon * gamma * math.sqrt(n * math.log(U)) * math.log(2.0 * R / beta) * math.log(4.0 / delta)


def predicted_alpha_median(k: int, T: int, alpha_mm: float) -> float:
    return 3.0 * (math.sqrt(2.0 * k * math.log(k) / T) + 2.0 * alpha_mm)


def median_target_T(n: int, k: int, gamma: float, T_cap: int) -> int:
    """round((k / (gamma sqrt n))^2), the round count that balances the two error terms."""
    if gamma == 0:
        return T_cap
    return max(1, min(T_cap, int(round((k / (gamma * math.sqrt(n))) ** 2))))


def median_plan_for_T(
    n: int, k: int, U: int, gamma: float, epsilon: float, delta: float, beta: float, T: int, capped: bool = False
) -> MedianPlan:
    alpha_mm = alpha_median(n, k, U, T, gamma, epsilon, delta, beta)
    return MedianPlan(
        T=T,
        alpha_mm=alpha_mm,
        queries=n * k * T * U,
        hard_cap=median_hard_cap(n, U),
        lhs=alpha_mm,
        rhs=1.0 / 6.0,
        capped=capped,
    )


def plan_for_nrmedian(
    n: int, k: int, U: int, gamma: float, epsilon: float, delta: float, beta: float, T_cap: int = DEFAULT_T_CAP
) -> MedianPlanResult:
    """T for NRMedian: the balancing round count, limited by the largest T meeting the constraint."""
    problem = _check_common(n, k, epsilon, delta, beta)
    if problem:
        return Infeasible(NRMEDIAN_CONSTRAINT, math.inf, 1.0 / 6.0, 1, problem)
    if U < 1:
        return Infeasible(NRMEDIAN_CONSTRAINT, math.inf, 1.0 / 6.0, 1, f"type universe must be nonempty, got U={U}")

    def margin(T: int) -> float:
        return 1.0 / 6.0 - alpha_median(n, k, U, T, gamma, epsilon, delta, beta)

    T_max = largest_feasible_T(margin, T_cap)
    if T_max is None:
        return Infeasible(NRMEDIAN_CONSTRAINT, alpha_median(n, k, U, 1, gamma, epsilon, delta, beta), 1.0 / 6.0, 1)
    T = min(T_max, median_target_T(n, k, gamma, T_cap))
    return median_plan_for_T(n, k, U, gamma, epsilon, delta, beta, T, capped=(T == T_cap))


def eta_shape(n: int, k: int, gamma: float) -> float:
    """sqrt(gamma) n^(1/4) k^(3/4): the scaling shape of the incentive error with constants dropped."""
    return math.sqrt(gamma) * n**0.25 * k**0.75


@dataclass
class PrivacyLedger:
    """Counts Laplace draws of one mechanism run; single writer."""

    per_step_epsilon: float
    delta: float
    draws: int = 0
    events: dict = field(default_factory=dict)

    def record(self, count: int, label: str = "laplace") -> None:
        self.draws += int(count)
        self.events[label] = self.events.get(label, 0) + int(count)

    def composed(self) -> Tuple[float, float]:
        """Advanced composition of every recorded draw with slack delta."""
        if self.draws == 0:
            return 0.0, 0.0
        return compose_advanced(self.per_step_epsilon, 0.0, self.draws, self.delta)

    def certified(self) -> Tuple[float, float]:
        """Guarantee of the simplified rule: per-step eps = eps/sqrt(8 m ln(1/delta)) over m draws gives (eps, delta)."""
        if self.draws == 0:
            return 0.0, 0.0
        return self.per_step_epsilon * math.sqrt(8.0 * self.draws * math.log(1.0 / self.delta)), self.delta

    def to_dict(self) -> dict:
        composed = self.composed()
        certified = self.certified()
        return {
            "draws": self.draws,
            "per_step_epsilon": self.per_step_epsilon,
            "events": dict(self.events),
            "composed_epsilon": composed[0],
            "composed_delta": composed[1],
            "certified_epsilon": certified[0],
            "certified_delta": certified[1],
        }
