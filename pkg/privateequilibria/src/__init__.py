from .exceptions import (
    ContractError,
    DecodeError,
    LossOracleError,
    MedianFailure,
    NumericError,
    PrivEqError,
    ResourceError,
    SensitivityViolation,
)

__all__ = [
    "ContractError",
    "DecodeError",
    "LossOracleError",
    "MedianFailure",
    "NumericError",
    "PrivEqError",
    "ResourceError",
    "SensitivityViolation",
]
