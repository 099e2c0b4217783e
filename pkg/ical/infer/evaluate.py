"""Recognition over datasets."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ical.autograd.tensor import no_grad
from ical.data.dataset import Sample
from ical.infer.beam import approximate_joint_search, beam_decode
from ical.infer.metrics import EvalResult, score_predictions
from ical.models.ical import ICALModel
from ical.vocab import IMPLICIT_VOCAB, SOS, Vocab

logger = logging.getLogger(__name__)


@dataclass
class Prediction:
    id: str
    tokens: list[str]
    score: float
    truncated: bool = False
    implicit: list[str] | None = None
    gate_mean: float | None = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def implicit_stream(model: ICALModel, grid, content: Sequence[int]) -> tuple[list[str], float]:
    """Greedy ICCM classes and the mean gate value for a teacher-forced L2R decode."""
    tokens = np.array([(SOS, *content)], dtype=np.int64)
    with no_grad():
        out = model.forward_features(grid, tokens, run_iccm=True)
    classes = out.implicit_logits.numpy()[0, : len(content)].argmax(axis=-1)
    return [IMPLICIT_VOCAB.symbols[c] for c in classes], float(out.gate.numpy().mean())


def recognize(
    model: ICALModel,
    sample: Sample,
    vocab: Vocab,
    beam: int = 10,
    max_len: int = 200,
    joint: bool = True,
    with_implicit: bool = False,
) -> Prediction:
    """Decodes one image; uses the approximate joint search unless ``joint`` is False."""
    image = sample.image.astype(model.head.weight.dtype)
    with no_grad():
        grid = model.encode(image[None, None], np.ones((1, *image.shape), dtype=bool))
    scorer = model.scorer(grid)
    if joint:
        result = approximate_joint_search(scorer, beam, max_len)
        content, score, truncated = result.tokens, result.score, result.truncated
    else:
        found = beam_decode(scorer, beam, max_len)
        content, score, truncated = found.best.tokens, found.best.normalized, found.truncated
    prediction = Prediction(sample.id, vocab.to_symbols(content), score, truncated)
    if with_implicit and model.has_iccm:
        prediction.implicit, prediction.gate_mean = implicit_stream(model, grid, content)
    return prediction


def predict(
    model: ICALModel,
    samples: Sequence[Sample],
    vocab: Vocab,
    beam: int = 10,
    max_len: int = 200,
    workers: int = 1,
    joint: bool = True,
    with_implicit: bool = False,
) -> list[Prediction]:
    """Recognizes ``samples`` on a thread pool; the result follows input order."""
    was_training = model.training
    model.eval()
    try:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(
                executor.map(
                    lambda s: recognize(model, s, vocab, beam, max_len, joint, with_implicit),
                    samples,
                )
            )
    finally:
        model.train(was_training)


def evaluate(
    model: ICALModel,
    samples: Sequence[Sample],
    vocab: Vocab,
    beam: int = 10,
    max_len: int = 200,
    workers: int = 1,
    joint: bool = True,
) -> tuple[EvalResult, list[Prediction]]:
    predictions = predict(model, samples, vocab, beam, max_len, workers, joint)
    result = score_predictions([p.tokens for p in predictions], [s.tokens for s in samples], [s.id for s in samples])
    truncated = sum(p.truncated for p in predictions)
    if truncated:
        logger.warning(f"{truncated} of {len(predictions)} decodes hit max_len {max_len}")
    return result, predictions
