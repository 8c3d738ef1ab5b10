from typing import Any, Optional, Tuple


class PrivEqError(Exception):
    """Root of every error raised by privateequilibria."""


class ContractError(PrivEqError, ValueError):
    """A documented precondition was violated by the caller."""


class ResourceError(PrivEqError, RuntimeError):
    """A backend was asked to do more work than its size budget allows."""


class NumericError(PrivEqError, ArithmeticError):
    """A numerical routine failed (zero weights, solver did not converge)."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class LossOracleError(PrivEqError, RuntimeError):
    """The expected-loss oracle failed inside a mechanism round."""

    def __init__(self, message: str, round_index: int):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index


class DecodeError(ContractError):
    """Interval decoding of a lower-bound query hit an empty intersection."""

    def __init__(self, query: int, level: int, message: str = ""):
        text = f"query {query} became inconsistent at level {level}"
        if message:
            text = f"{text}: {message}"
        super().__init__(text)
        self.query = query
        self.level = level


class SensitivityViolation(PrivEqError, AssertionError):
    """An observed utility change exceeded the game's declared gamma."""

    def __init__(self, observed: float, gamma: float, witness: Tuple[Any, ...]):
        super().__init__(
            f"observed sensitivity {observed!r} exceeds declared gamma {gamma!r}; "
            f"witness (i, i_prime, a_i, a_i_prime, profile) = {witness!r}"
        )
        self.observed = observed
        self.gamma = gamma
        self.witness = witness


class MedianFailure(PrivEqError, RuntimeError):
    """The median mechanism exhausted its hard-query cap or pruned every candidate."""

    def __init__(self, message: str, round_index: int):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index
