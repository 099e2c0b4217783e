"""Beam search and bidirectional approximate joint search.

Decoders are driven through a scorer: a function that maps a ``(k, T)`` batch of
decoder inputs (start marker first) to ``(k, T, |V|)`` log-probabilities. Each step
re-scores the full prefix, so a hypothesis carries no cached decoder or coverage
state; its coverage is a function of its tokens.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ical.vocab import PAD, Direction, markers

logger = logging.getLogger(__name__)

Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Hypothesis:
    """A partial or finished decode; ``tokens`` holds content ids in decoding order."""

    tokens: tuple[int, ...]
    score: float
    direction: Direction = Direction.L2R
    finished: bool = False

    @property
    def length(self) -> int:
        """Number of scored tokens, the end marker included."""
        return len(self.tokens) + int(self.finished)

    @property
    def normalized(self) -> float:
        return self.score / max(self.length, 1)

    def l2r_tokens(self) -> tuple[int, ...]:
        return self.tokens if self.direction == Direction.L2R else tuple(reversed(self.tokens))


@dataclass
class BeamResult:
    hypotheses: list[Hypothesis]
    truncated: bool = False

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]


def _rank(hypotheses: Sequence[Hypothesis]) -> list[Hypothesis]:
    return sorted(hypotheses, key=lambda h: (-h.normalized, h.tokens))


def _step_log_probs(scorer: Scorer, prefixes: list[tuple[int, ...]], start: int) -> np.ndarray:
    tokens = np.array([(start, *p) for p in prefixes], dtype=np.int64)
    logp = np.array(scorer(tokens)[:, -1, :], dtype=np.float64)
    logp[:, PAD] = -np.inf
    logp[:, start] = -np.inf
    return logp


def beam_decode(
    scorer: Scorer,
    beam: int = 10,
    max_len: int = 200,
    direction: Direction = Direction.L2R,
) -> BeamResult:
    """Width-``beam`` search over one image.

    At every step the ``beam`` best extensions by raw score survive, ties broken by
    the lower token id; extensions ending in the end marker retire. The search
    stops once ``beam`` hypotheses have retired, none is alive, or ``max_len``
    tokens were produced. Retired hypotheses are ranked by score per token; if none
    retired the alive ones are returned instead and ``truncated`` is set.
    """
    if beam < 1:
        raise ValueError(f"beam {beam} out of range [1, inf)")
    start, end = markers(direction)
    alive = [Hypothesis((), 0.0, direction)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        logp = _step_log_probs(scorer, [h.tokens for h in alive], start)
        totals = np.array([h.score for h in alive])[:, None] + logp
        hyp_index, token_index = np.indices(totals.shape)
        order = np.lexsort((hyp_index.ravel(), token_index.ravel(), -totals.ravel()))
        survivors: list[Hypothesis] = []
        for flat in order[:beam]:
            score = float(totals.flat[flat])
            if not np.isfinite(score):
                break
            parent, token = alive[hyp_index.flat[flat]], int(token_index.flat[flat])
            if token == end:
                finished.append(Hypothesis(parent.tokens, score, direction, finished=True))
            else:
                survivors.append(Hypothesis((*parent.tokens, token), score, direction))
        alive = survivors
        if len(finished) >= beam or not alive:
            break
    if finished:
        return BeamResult(_rank(finished))
    logger.debug(f"{direction.value} beam hit max_len {max_len} without an end marker")
    return BeamResult(_rank(alive), truncated=True)


def greedy_decode(scorer: Scorer, max_len: int = 200, direction: Direction = Direction.L2R) -> Hypothesis:
    start, end = markers(direction)
    tokens: tuple[int, ...] = ()
    score = 0.0
    for _ in range(max_len):
        logp = _step_log_probs(scorer, [tokens], start)[0]
        token = int(np.argmax(logp))
        score += float(logp[token])
        if token == end:
            return Hypothesis(tokens, score, direction, finished=True)
        tokens = (*tokens, token)
    return Hypothesis(tokens, score, direction)


def sequence_log_prob(scorer: Scorer, tokens: Sequence[int], direction: Direction = Direction.L2R) -> float:
    """Teacher-forced log-probability of ``tokens`` followed by the end marker."""
    start, end = markers(direction)
    logp = scorer(np.array([(start, *tokens)], dtype=np.int64))[0]
    targets = [*tokens, end]
    return float(sum(logp[t, token] for t, token in enumerate(targets)))


@dataclass(frozen=True)
class JointCandidate:
    hypothesis: Hypothesis
    own: float
    opposite: float

    @property
    def joint(self) -> float:
        return (self.own + self.opposite) / max(len(self.hypothesis.tokens) + 1, 1)


@dataclass
class JointResult:
    tokens: tuple[int, ...]
    score: float
    candidates: list[JointCandidate] = field(default_factory=list)
    truncated: bool = False


def approximate_joint_search(scorer: Scorer, beam: int = 10, max_len: int = 200) -> JointResult:
    """Beams both directions and rescores every finalist in the opposite direction.

    A finalist's joint score is its own log-probability plus that of its reversal
    under the other direction, divided by its token count (end marker included). The
    winner is returned in L2R order.
    """
    candidates: list[JointCandidate] = []
    truncated = False
    for direction in Direction:
        result = beam_decode(scorer, beam, max_len, direction)
        truncated = truncated or result.truncated
        other = Direction.R2L if direction == Direction.L2R else Direction.L2R
        for hyp in result.hypotheses:
            opposite = sequence_log_prob(scorer, tuple(reversed(hyp.tokens)), other)
            own = hyp.score if hyp.finished else sequence_log_prob(scorer, hyp.tokens, direction)
            candidates.append(JointCandidate(hyp, own, opposite))
    best = min(candidates, key=lambda c: (-c.joint, c.hypothesis.direction != Direction.L2R, c.hypothesis.l2r_tokens()))
    return JointResult(best.hypothesis.l2r_tokens(), best.joint, candidates, truncated)
