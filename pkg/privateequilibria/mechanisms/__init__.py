from typing import Dict, Type

from privateequilibria.src.base_mechanism import BaseMechanism
from privateequilibria.src.exceptions import ContractError

from .exact_ce_mechanism import ExactCEMechanism, solve_exact_ce
from .laplace_mechanism import LaplaceMechanism, run_nrlaplace
from .median_mechanism import MedianMechanism, run_nrmedian
from .naive_majority_mechanism import NaiveMajorityMechanism

MECHANISMS: Dict[str, Type[BaseMechanism]] = {
    LaplaceMechanism.name: LaplaceMechanism,
    MedianMechanism.name: MedianMechanism,
    ExactCEMechanism.name: ExactCEMechanism,
    NaiveMajorityMechanism.name: NaiveMajorityMechanism,
}


def build_mechanism(name: str, **kwargs) -> BaseMechanism:
    if name not in MECHANISMS:
        raise ContractError(f"unknown mechanism {name!r}; known: {sorted(MECHANISMS)}")
    return MECHANISMS[name](**kwargs)


__all__ = [
    "ExactCEMechanism",
    "LaplaceMechanism",
    "MECHANISMS",
    "MedianMechanism",
    "NaiveMajorityMechanism",
    "build_mechanism",
    "run_nrlaplace",
    "run_nrmedian",
    "solve_exact_ce",
]
