"""Recover subset-sum answers from the query players' marginal play in an approximate equilibrium."""

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from privateequilibria.games.lowerbound.lowerbound_game import Interval, LowerBoundGame, region_intervals
from privateequilibria.src.base_verifier import CorrelatedDistribution
from privateequilibria.src.exceptions import ContractError, DecodeError

logger = logging.getLogger(__name__)

MAJORITY = 2.0 / 3.0
# region shrink and stopping width, in units of alpha
REGION_SLACK = 9.0
STOP_WIDTH = 18.0
ANSWER_WIDTH = 2.0 * STOP_WIDTH


@dataclass(frozen=True)
class DecodedAnswer:
    query: int
    answer: float
    halfwidth: float
    levels_used: int

    def to_dict(self) -> dict:
        return {"answer": self.answer, "halfwidth": self.halfwidth, "levels_used": self.levels_used}


def _intersect(current: Sequence[Interval], region: Sequence[Interval]) -> List[Interval]:
    out = []
    for lo_a, hi_a in current:
        for lo_b, hi_b in region:
            lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
            if hi > lo:
                out.append((lo, hi))
    return out


def _strips(h: int, slack: float) -> List[Interval]:
    """Neighbourhoods of the interior breakpoints m 2^-h where f_h and g_h tie."""
    width = 2.0**-h
    return [(max(0.0, m * width - slack), min(1.0, m * width + slack)) for m in range(1, 2**h)]


def decode_answer(game: LowerBoundGame, marginals: np.ndarray, j: int, alpha: float) -> DecodedAnswer:
    """
    Narrow [0, 1] level by level for query ``j``.

    At level h the query player (j, h) votes for F (action 0) or G (action 1)
    when its majority frequency reaches 2/3; otherwise the answer sits next to
    a breakpoint, so the interval is cut to the strips around the breakpoints
    and decoding stops. Levels with 2^-h < 18 alpha are never read.

    Raises DecodeError when the game runs out of levels before the interval
    is narrower than 36 alpha.
    """
    slack = REGION_SLACK * alpha
    current: List[Interval] = [(0.0, 1.0)]
    levels_used = 0
    for h in range(1, game.levels + 1):
        if 2.0**-h < STOP_WIDTH * alpha:
            break
        freqs = marginals[game.player_index(j, h)]
        majority = int(np.argmax(freqs))
        levels_used = h
        if freqs[majority] >= MAJORITY:
            current = _intersect(current, region_intervals(h, slack, "F" if majority == 0 else "G"))
            stop = False
        else:
            current = _intersect(current, _strips(h, slack))
            stop = True
        if not current:
            raise DecodeError(j, h, "empty candidate interval")
        if stop:
            break
    lo = min(a for a, _ in current)
    hi = max(b for _, b in current)
    halfwidth = (hi - lo) / 2.0
    if halfwidth > STOP_WIDTH * alpha:
        message = f"levels exhausted with halfwidth {halfwidth!r} > {STOP_WIDTH * alpha!r}; alpha too small for this game"
        raise DecodeError(j, levels_used, message)
    return DecodedAnswer(query=j, answer=(lo + hi) / 2.0, halfwidth=halfwidth, levels_used=levels_used)


def smallest_alpha(game: LowerBoundGame) -> float:
    """Below this alpha a consistent equilibrium can still exhaust the levels before reaching width 36 alpha."""
    return 2.0 ** -(game.levels + 1) / STOP_WIDTH


def decode_answers(game: LowerBoundGame, dist: CorrelatedDistribution, alpha: float) -> List[DecodedAnswer]:
    """Decode every query; frequencies are the exact marginals of the distribution."""
    if alpha <= 0:
        raise ContractError(f"alpha must be positive, got {alpha}")
    if dist.n != game.n or dist.k != 2:
        raise ContractError(f"distribution has n={dist.n}, k={dist.k}; game needs n={game.n}, k=2")
    marginals = dist.marginals()
    answers = [decode_answer(game, marginals, j, alpha) for j in range(game.instance.m)]
    logger.debug("decoded %d queries at alpha=%g", len(answers), alpha)
    return answers


__all__ = ["ANSWER_WIDTH", "DecodedAnswer", "decode_answer", "decode_answers", "smallest_alpha"]
