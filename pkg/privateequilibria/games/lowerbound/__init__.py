from .lowerbound_decoder import DecodedAnswer, decode_answer, decode_answers, smallest_alpha
from .lowerbound_game import (
    LowerBoundGame,
    SubsetSumInstance,
    build_lowerbound_game,
    f_h,
    g_h,
    in_region,
    planted_distribution,
    region_intervals,
)

__all__ = [
    "DecodedAnswer",
    "LowerBoundGame",
    "SubsetSumInstance",
    "build_lowerbound_game",
    "decode_answer",
    "decode_answers",
    "f_h",
    "g_h",
    "in_region",
    "planted_distribution",
    "region_intervals",
    "smallest_alpha",
]
