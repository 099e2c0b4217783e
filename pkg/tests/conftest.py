"""Shared fixtures: a tiny model configuration, synthetic samples and batches."""

from __future__ import annotations

import numpy as np
import pytest

from ical.autograd.tensor import default_dtype
from ical.data.batch import make_batch
from ical.data.dataset import Sample
from ical.data.synth import synth_generate, synth_symbols
from ical.models.ical import ICALModel
from ical.presets import DecoderConfig, EncoderConfig, ModelConfig
from ical.vocab import Vocab, tokenize

TINY = ModelConfig(
    name="tiny",
    encoder=EncoderConfig(num_blocks=2, layers_per_block=2, growth_rate=4, dropout=0.0, d_model=16),
    decoder=DecoderConfig(layers=2, d_model=16, heads=2, ffn_dim=32, dropout=0.0, arm_kernel=3, arm_channels=4),
    max_len=12,
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def float64():
    with default_dtype("float64"):
        yield


@pytest.fixture
def tiny_config() -> ModelConfig:
    return TINY


@pytest.fixture(scope="session")
def synth_vocab() -> Vocab:
    return Vocab(synth_symbols())


@pytest.fixture(scope="session")
def synth_samples() -> list[Sample]:
    return [Sample(s.id, s.image, tokenize(s.label)) for s in synth_generate(7, 4)]


@pytest.fixture
def tiny_batch(synth_samples, synth_vocab):
    return make_batch(synth_samples[:2], synth_vocab)


@pytest.fixture
def tiny_model(synth_vocab) -> ICALModel:
    return ICALModel.build(TINY, len(synth_vocab), seed=3, dtype="float64")
