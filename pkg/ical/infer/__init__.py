"""Decoding and evaluation."""

from ical.infer.beam import approximate_joint_search, beam_decode, greedy_decode, sequence_log_prob
from ical.infer.evaluate import evaluate, predict, recognize
from ical.infer.metrics import EvalResult, aggregate, token_edit_distance

__all__ = [
    "EvalResult",
    "aggregate",
    "approximate_joint_search",
    "beam_decode",
    "evaluate",
    "greedy_decode",
    "predict",
    "recognize",
    "sequence_log_prob",
    "token_edit_distance",
]
