"""The full recognizer: encoder, ARM decoder, ICCM, fusion gate and output heads."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ical.autograd import functional as F
from ical.autograd.nn import Linear, Module
from ical.autograd.random import SeedTree
from ical.autograd.tensor import Tensor, default_dtype, no_grad
from ical.errors import ContractError
from ical.models.decoder import Decoder
from ical.models.encoder import DenseEncoder, FeatureGrid
from ical.models.iccm import FusionGate, ImplicitConstructor
from ical.presets import IMPLICIT_CLASSES, ModelConfig

logger = logging.getLogger(__name__)

Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass
class ModelOutput:
    """Per-direction outputs. The ICCM fields are None when the ICCM did not run."""

    explicit: Tensor
    initial_logits: Tensor
    implicit: Tensor | None = None
    implicit_logits: Tensor | None = None
    fused: Tensor | None = None
    fused_logits: Tensor | None = None
    gate: Tensor | None = None


class ICALModel(Module):
    """Image-to-LaTeX recognizer.

    The main head ``Linear(d_model, |V|)`` is shared by E_feature (initial
    prediction) and the fused features F. The implicit head predicts the eight
    implicit classes from I_feature. With ``config.use_iccm`` False the ICCM, gate
    and implicit head are not built at all.

    Parameters are initialized from generators keyed by ``seed`` and each
    submodule's name, so two builds that differ only in ``use_iccm`` share
    bit-identical encoder, decoder and head weights.
    """

    def __init__(self, config: ModelConfig, vocab_size: int, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        seeds = SeedTree(seed, "init")
        d = config.decoder.d_model
        self.encoder = DenseEncoder(config.encoder, seeds.child("encoder"))
        self.decoder = Decoder(config.decoder, vocab_size, seeds.child("decoder"))
        self.head = Linear(d, vocab_size, seeds("head"))
        self.iccm = self.gate = self.implicit_head = None
        if config.use_iccm:
            self.iccm = ImplicitConstructor(config.decoder, seeds.child("iccm"))
            self.gate = FusionGate(d, seeds.child("gate"))
            self.implicit_head = Linear(d, IMPLICIT_CLASSES, seeds("implicit_head"))

    @classmethod
    def build(cls, config: ModelConfig, vocab_size: int, seed: int = 0, dtype: str = "float32") -> ICALModel:
        with default_dtype(dtype):
            model = cls(config, vocab_size, seed)
        logger.info(f"Built {config.name} model: {model.num_parameters():,} parameters ({dtype})")
        return model

    @property
    def has_iccm(self) -> bool:
        return self.iccm is not None

    def encode(self, images: np.ndarray | Tensor, mask: np.ndarray) -> FeatureGrid:
        return self.encoder(images, mask)

    def forward_features(self, grid: FeatureGrid, tokens: np.ndarray, run_iccm: bool = True) -> ModelOutput:
        """Decodes a teacher-forced prefix against an encoded batch.

        Raises:
            ContractError: if ``run_iccm`` is requested on a model built without it.
        """
        state = self.decoder(grid, tokens)
        out = ModelOutput(explicit=state.features, initial_logits=self.head(state.features))
        if not run_iccm:
            return out
        if not self.has_iccm:
            raise ContractError("model was built without the ICCM")
        out.implicit = self.iccm(state.features, tokens)
        out.implicit_logits = self.implicit_head(out.implicit)
        out.fused, out.gate = self.gate(state.features, out.implicit)
        out.fused_logits = self.head(out.fused)
        return out

    def forward(self, images: np.ndarray | Tensor, mask: np.ndarray, tokens: np.ndarray) -> ModelOutput:
        return self.forward_features(self.encode(images, mask), tokens, run_iccm=self.has_iccm)

    def scorer(self, grid: FeatureGrid) -> Scorer:
        """Returns ``tokens (k, T) -> log-probabilities (k, T, |V|)`` for one encoded image.

        Predictions come from the fused features when the model has an ICCM and from
        E_feature otherwise.
        """

        def score(tokens: np.ndarray) -> np.ndarray:
            tokens = np.asarray(tokens)
            with no_grad():
                index = np.zeros(len(tokens), dtype=np.int64)
                expanded = FeatureGrid(grid.features[index], grid.mask[index])
                out = self.forward_features(expanded, tokens, run_iccm=self.has_iccm)
                logits = out.fused_logits if self.has_iccm else out.initial_logits
                return F.log_softmax(logits, axis=-1).numpy().astype(np.float64)

        return score
