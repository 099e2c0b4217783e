"""Padded bidirectional training batches."""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ical.data.dataset import Sample
from ical.vocab import IMPLICIT_VOCAB, PAD, Direction, Vocab, build_implicit, make_bidirectional


@dataclass
class Batch:
    """Images and targets for both decoding directions.

    ``targets[d]`` holds full decoder rows (start marker, content, end marker)
    padded with PAD, so the decoder input is ``targets[d][:, :-1]`` and the
    next-token target is ``targets[d][:, 1:]``. ``implicit[d]`` is index-aligned
    with the latter: the implicit class of every content token, then EOS for the
    end slot in both directions.
    """

    ids: list[str]
    images: np.ndarray
    image_mask: np.ndarray
    targets: dict[Direction, np.ndarray]
    implicit: dict[Direction, np.ndarray]
    lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def inputs(self, direction: Direction) -> np.ndarray:
        return self.targets[direction][:, :-1]

    def outputs(self, direction: Direction) -> np.ndarray:
        return self.targets[direction][:, 1:]

    def token_mask(self, direction: Direction) -> np.ndarray:
        return self.outputs(direction) != PAD


def pad_images(images: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    height = max(im.shape[0] for im in images)
    width = max(im.shape[1] for im in images)
    stack = np.zeros((len(images), 1, height, width), dtype=np.float32)
    mask = np.zeros((len(images), height, width), dtype=bool)
    for i, im in enumerate(images):
        h, w = im.shape
        stack[i, 0, :h, :w] = im
        mask[i, :h, :w] = True
    return stack, mask


def _pad_rows(rows: list[tuple[int, ...]]) -> np.ndarray:
    out = np.full((len(rows), max(len(r) for r in rows)), PAD, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : len(row)] = row
    return out


def make_batch(samples: Sequence[Sample], vocab: Vocab) -> Batch:
    """Pads images and builds L2R/R2L token and implicit targets.

    Raises:
        ValueError: on an empty sample list.
        UnknownTokenError: if a label holds a symbol outside ``vocab``.
    """
    if not samples:
        raise ValueError("make_batch needs at least one sample")
    images, mask = pad_images([s.image for s in samples])
    targets: dict[Direction, list[tuple[int, ...]]] = {d: [] for d in Direction}
    implicit: dict[Direction, list[tuple[int, ...]]] = {d: [] for d in Direction}
    for sample in samples:
        l2r, r2l = make_bidirectional(sample.tokens, vocab)
        targets[Direction.L2R].append(l2r.decoder_ids)
        targets[Direction.R2L].append(r2l.decoder_ids)
        forward = IMPLICIT_VOCAB.encode(build_implicit(sample.tokens)).ids[1:]
        implicit[Direction.L2R].append(forward)
        implicit[Direction.R2L].append((*reversed(forward[:-1]), forward[-1]))
    return Batch(
        ids=[s.id for s in samples],
        images=images,
        image_mask=mask,
        targets={d: _pad_rows(rows) for d, rows in targets.items()},
        implicit={d: _pad_rows(rows) for d, rows in implicit.items()},
        lengths=np.array([len(s.tokens) for s in samples], dtype=np.int64),
    )


def iter_batches(
    samples: Sequence[Sample],
    vocab: Vocab,
    batch_size: int,
    rng: np.random.Generator | None = None,
) -> Iterator[Batch]:
    """Yields batches in a shuffled order when ``rng`` is given, else in input order."""
    order = rng.permutation(len(samples)) if rng is not None else np.arange(len(samples))
    for start in range(0, len(order), batch_size):
        yield make_batch([samples[i] for i in order[start : start + batch_size]], vocab)
