import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple, Union

import itertools
import numpy as np

from privateequilibria.src.base_game import MixedStrategy
from privateequilibria.src.exceptions import ContractError, NumericError
from privateequilibria.src.privacy import laplace_noise

FIXED = "fixed"
SWAP = "swap"
LEARNERS = (FIXED, SWAP)

LOSS_TOL = 1e-12
STATIONARY_TOL = 1e-10
STATIONARY_MAX_ITER = 10**5
STATIONARY_DAMPING = 1e-8


def default_eta(k: int, T: int) -> float:
    """Hedge learning rate sqrt(2 ln k / T)."""
    if k < 2 or T < 1:
        raise ContractError(f"learning rate needs k >= 2 and T >= 1, got k={k}, T={T}")
    return math.sqrt(2.0 * math.log(k) / T)


def _check_loss(loss: np.ndarray, k: int) -> np.ndarray:
    loss = np.asarray(loss, dtype=float).reshape(-1)
    if loss.size != k:
        raise ContractError(f"loss vector has length {loss.size}, expected {k}")
    if np.any(loss < -LOSS_TOL) or np.any(loss > 1.0 + LOSS_TOL):
        raise ContractError(f"loss entries must lie in [0, 1]: {loss.tolist()}")
    return np.clip(loss, 0.0, 1.0)


def _hedge_update(probs: np.ndarray, loss: np.ndarray, eta: float) -> np.ndarray:
    # shifting by the row minimum leaves the normalized result unchanged
    exponent = -eta * (loss - loss.min(axis=-1, keepdims=True))
    weights = probs * np.exp(exponent)
    total = weights.sum(axis=-1, keepdims=True)
    if not np.all(np.isfinite(total)) or np.any(total <= 0.0):
        raise NumericError("multiplicative weights collapsed to zero")
    return weights / total


def hedge_step(state: Union[MixedStrategy, np.ndarray], loss: Sequence[float], eta: float) -> MixedStrategy:
    """One multiplicative-weights update: w^j proportional to pi^j exp(-eta l^j)."""
    if eta <= 0:
        raise ContractError(f"eta must be positive, got {eta}")
    probs = np.asarray(state, dtype=float)
    return MixedStrategy(_hedge_update(probs, _check_loss(loss, probs.size), eta))


def stationary_distribution(learners: np.ndarray) -> Tuple[np.ndarray, float]:
    """Stationary distribution of the column-stochastic matrix whose column j is ``learners[j]``.

    Solves (P - I) pi = 0, sum(pi) = 1 directly; falls back to power iteration
    from uniform, then to a damped restart, when the direct solution misses
    the residual tolerance.

    Returns:
        (pi, residual) with residual = ||P pi - pi||_1
    """
    P = np.asarray(learners, dtype=float).T
    k = P.shape[0]
    system = np.vstack([P - np.eye(k), np.ones((1, k))])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    if pi.sum() > 0:
        pi = pi / pi.sum()
        residual = float(np.abs(P @ pi - pi).sum())
        if residual <= STATIONARY_TOL:
            return pi, residual

    for matrix in (P, (1.0 - STATIONARY_DAMPING) * P + STATIONARY_DAMPING / k):
        pi = np.full(k, 1.0 / k)
        for _ in range(STATIONARY_MAX_ITER):
            nxt = matrix @ pi
            nxt = nxt / nxt.sum()
            residual = float(np.abs(nxt - pi).sum())
            pi = nxt
            if residual <= STATIONARY_TOL:
                return pi, residual
    raise NumericError(f"stationary distribution did not converge, residual {residual:.3e}", residual)


@dataclass(frozen=True)
class SwapLearnerState:
    """k internal Hedge learners (rows of ``learners``) and the current played distribution."""

    learners: np.ndarray
    play: np.ndarray
    eta: float

    @classmethod
    def initial(cls, k: int, eta: float) -> "SwapLearnerState":
        return cls(np.full((k, k), 1.0 / k), np.full(k, 1.0 / k), eta)

    @property
    def k(self) -> int:
        return int(self.play.size)


def swap_step(state: SwapLearnerState, loss: Sequence[float]) -> Tuple[SwapLearnerState, MixedStrategy]:
    """Blum-Mansour update: learner j sees the loss scaled by the play probability of j."""
    loss = _check_loss(loss, state.k)
    scaled = state.play[:, None] * loss[None, :]
    learners = _hedge_update(state.learners, scaled, state.eta)
    play, _ = stationary_distribution(learners)
    return SwapLearnerState(learners, play, state.eta), MixedStrategy(play)


class HedgeLearner:
    """Stateful wrapper around ``hedge_step`` with a fixed horizon."""

    kind = FIXED

    def __init__(self, k: int, T: int, eta: Optional[float] = None):
        self.k = k
        self.eta = default_eta(k, T) if eta is None else eta
        self._probs = np.full(k, 1.0 / k)

    @property
    def current(self) -> np.ndarray:
        return self._probs

    def update(self, loss: np.ndarray) -> np.ndarray:
        self._probs = _hedge_update(self._probs, _check_loss(loss, self.k), self.eta)
        return self._probs


class SwapLearner:
    """Stateful wrapper around ``swap_step``."""

    kind = SWAP

    def __init__(self, k: int, T: int, eta: Optional[float] = None):
        self.k = k
        self.state = SwapLearnerState.initial(k, default_eta(k, T) if eta is None else eta)

    @property
    def current(self) -> np.ndarray:
        return self.state.play

    def update(self, loss: np.ndarray) -> np.ndarray:
        self.state, _ = swap_step(self.state, loss)
        return self.state.play


def make_learner(kind: str, k: int, T: int, eta: Optional[float] = None):
    if kind == FIXED:
        return HedgeLearner(k, T, eta)
    if kind == SWAP:
        return SwapLearner(k, T, eta)
    raise ContractError(f"unknown learner {kind!r}; expected one of {LEARNERS}")


@dataclass(frozen=True)
class PlaySequence:
    """States pi_0..pi_T of one learner; pi_{t-1} is the strategy played against loss l_t."""

    states: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ContractError(f"play sequence needs shape (T+1, k), got {states.shape}")
        if np.any(np.abs(states.sum(axis=1) - 1.0) > 1e-9) or np.any(states < -1e-12):
            raise ContractError("play sequence rows must be probability vectors")
        if not np.allclose(states[0], 1.0 / states.shape[1], atol=1e-12, rtol=0.0):
            raise ContractError(f"play sequence must start uniform, got {states[0].tolist()}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    @property
    def k(self) -> int:
        return self.states.shape[1]

    @property
    def played(self) -> np.ndarray:
        return self.states[:-1]

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, t: int) -> MixedStrategy:
        return MixedStrategy(self.states[t])


def run_learner(kind: str, L: Union[np.ndarray, "LossMatrix"], eta: Optional[float] = None) -> PlaySequence:
    """Run a fresh learner over the rows of ``L`` (entries in [0, 1])."""
    rows = _rows(L)
    T, k = rows.shape
    learner = make_learner(kind, k, T, eta)
    states = np.empty((T + 1, k))
    states[0] = learner.current
    for t in range(T):
        states[t + 1] = learner.update(rows[t])
    return PlaySequence(states)


@dataclass(frozen=True)
class LossMatrix:
    """T loss vectors. ``kind`` is clean ([0,1]), rescaled ([1/3,2/3]) or noisy (unrestricted)."""

    rows: np.ndarray
    kind: str = "clean"

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ContractError(f"loss matrix needs shape (T, k), got {rows.shape}")
        if self.kind == "clean" and (rows.min(initial=0.0) < -LOSS_TOL or rows.max(initial=0.0) > 1 + LOSS_TOL):
            raise ContractError("clean losses must lie in [0, 1]")
        if self.kind == "rescaled" and (
            rows.min(initial=0.5) < 1 / 3 - LOSS_TOL or rows.max(initial=0.5) > 2 / 3 + LOSS_TOL
        ):
            raise ContractError("rescaled losses must lie in [1/3, 2/3]")
        if self.kind not in ("clean", "rescaled", "noisy"):
            raise ContractError(f"unknown loss matrix kind {self.kind!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def escaped_entries(self) -> int:
        return int(np.count_nonzero((self.rows < 0.0) | (self.rows > 1.0)))

    def clamped(self) -> "LossMatrix":
        return LossMatrix(np.clip(self.rows, 0.0, 1.0), "clean")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.rows, dtype=dtype)


@dataclass(frozen=True)
class NoiseMatrix:
    rows: np.ndarray
    kind: str
    scale: float
    seed: Optional[int] = None

    @classmethod
    def bounded(cls, T: int, k: int, b: float, seed: int) -> "NoiseMatrix":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-b, b, size=(T, k)), "bounded", b, seed)

    @classmethod
    def laplace(cls, T: int, k: int, sigma: float, seed: int) -> "NoiseMatrix":
        rng = np.random.default_rng(seed)
        return cls(laplace_noise(sigma, (T, k), rng), "laplace", sigma, seed)

    @classmethod
    def zeros(cls, T: int, k: int) -> "NoiseMatrix":
        return cls(np.zeros((T, k)), "bounded", 0.0)

    def __post_init__(self):
        if self.kind not in ("bounded", "laplace"):
            raise ContractError(f"unknown noise kind {self.kind!r}")
        if self.kind == "bounded" and np.any(np.abs(self.rows) > self.scale):
            raise ContractError(f"bounded noise escapes [-{self.scale}, {self.scale}]")


@dataclass(frozen=True)
class DeviationMap:
    """A function table [k] -> [k]; ``f o pi`` moves the mass of action r onto table[r]."""

    table: Tuple[int, ...]
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        table = tuple(int(x) for x in self.table)
        k = len(table)
        if k == 0 or any(not 0 <= x < k for x in table):
            raise ContractError(f"deviation map must send [k] into [k], got {table}")
        matrix = np.zeros((k, k))
        matrix[np.arange(k), table] = 1.0
        matrix.setflags(write=False)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_matrix", matrix)

    @classmethod
    def identity(cls, k: int) -> "DeviationMap":
        return cls(tuple(range(k)))

    @classmethod
    def constant(cls, k: int, action: int) -> "DeviationMap":
        return cls((action,) * k)

    @classmethod
    def enumerate_all(cls, k: int) -> Iterator["DeviationMap"]:
        for table in itertools.product(range(k), repeat=k):
            yield cls(table)

    @property
    def k(self) -> int:
        return len(self.table)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def apply(self, pi: Union[MixedStrategy, np.ndarray]) -> np.ndarray:
        return np.asarray(pi, dtype=float) @ self._matrix


def _rows(L) -> np.ndarray:
    if isinstance(L, (LossMatrix, NoiseMatrix)):
        return np.asarray(L.rows, dtype=float)
    return np.asarray(L, dtype=float)


def _played(states, T: int) -> np.ndarray:
    if isinstance(states, PlaySequence):
        played = states.played
    else:
        played = np.asarray(states, dtype=float)
        if played.shape[0] == T + 1:
            played = played[:-1]
    if played.shape[0] != T:
        raise ContractError(f"{played.shape[0]} played states do not match {T} loss rows")
    return played


def lambda_loss(states, L) -> float:
    """Average expected loss (1/T) sum_t pi_t . l_t."""
    rows = _rows(L)
    played = _played(states, rows.shape[0])
    return float(np.einsum("tj,tj->", played, rows) / rows.shape[0])


def best_swap_map(states, L) -> DeviationMap:
    """Coordinate-wise optimal swap: each source action goes to the target with least weighted loss."""
    rows = _rows(L)
    played = _played(states, rows.shape[0])
    cumulative = played.T @ rows
    return DeviationMap(tuple(int(j) for j in cumulative.argmin(axis=1)))


def rho(states, L, family: Union[str, DeviationMap] = FIXED) -> float:
    """Regret of ``states`` on ``L`` against a deviation family or a single deviation map."""
    rows = _rows(L)
    T = rows.shape[0]
    played = _played(states, T)
    if isinstance(family, DeviationMap):
        deviated = played @ family.matrix
        return float((np.einsum("tj,tj->", played, rows) - np.einsum("tj,tj->", deviated, rows)) / T)
    own = np.einsum("tj,tj->", played, rows)
    if family == FIXED:
        return float((own - rows.sum(axis=0).min()) / T)
    if family == SWAP:
        cumulative = played.T @ rows
        return float((own - cumulative.min(axis=1).sum()) / T)
    raise ContractError(f"unknown deviation family {family!r}")


def prefix_regret_trace(played: np.ndarray, L: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """lambda, rho_fixed and rho_swap over the first t rounds, for t = 1..T."""
    played = np.asarray(played, dtype=float)
    rows = np.asarray(L, dtype=float)
    T = rows.shape[0]
    counts = np.arange(1, T + 1, dtype=float)
    own = np.cumsum(np.einsum("tj,tj->t", played, rows))
    fixed_best = np.cumsum(rows, axis=0).min(axis=1)
    swap_cumulative = np.cumsum(np.einsum("tr,tj->trj", played, rows), axis=0)
    swap_best = swap_cumulative.min(axis=2).sum(axis=1)
    return own / counts, (own - fixed_best) / counts, (own - swap_best) / counts


def rescale_losses(L) -> np.ndarray:
    """(L + 1) / 3, mapping [0, 1] onto [1/3, 2/3]."""
    rows = _rows(L)
    if np.any(rows < -LOSS_TOL) or np.any(rows > 1.0 + LOSS_TOL):
        raise ContractError("rescale_losses expects losses in [0, 1]")
    return (np.clip(rows, 0.0, 1.0) + 1.0) / 3.0


def unscale_losses(L_tilde) -> np.ndarray:
    rows = _rows(L_tilde)
    if np.any(rows < 1 / 3 - LOSS_TOL) or np.any(rows > 2 / 3 + LOSS_TOL):
        raise ContractError("unscale_losses expects losses in [1/3, 2/3]")
    return 3.0 * rows - 1.0


def laplace_tolerance(sigma: float, T: int, k: int, beta: float, family: str = FIXED) -> float:
    """Tail threshold sigma sqrt(24 |F'| ln(4k/beta) / T), with |F'| = 1 for fixed and k for swap."""
    multiplier = 1 if family == FIXED else k
    return sigma * math.sqrt(24.0 * multiplier * math.log(4.0 * k / beta) / T)


def noise_tolerance_check(states, L, Z: NoiseMatrix, family: str = FIXED, beta: float = 0.05) -> Tuple[float, float]:
    """Realized gap rho(states, L) - rho(states, L + Z) and the bound that applies to Z.

    ``states`` should come from a learner run on the noisy losses L + Z.
    """
    rows = _rows(L)
    noisy = rows + Z.rows
    gap = rho(states, rows, family) - rho(states, noisy, family)
    if Z.kind == "bounded":
        return gap, 2.0 * Z.scale
    T, k = rows.shape
    return gap, laplace_tolerance(Z.scale, T, k, beta, family)
