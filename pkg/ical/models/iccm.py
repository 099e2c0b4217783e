"""Implicit Character Construction Module and the fusion gate."""

from __future__ import annotations

import numpy as np

from ical.autograd import functional as F
from ical.autograd.nn import Dropout, LayerNorm, Linear, Module
from ical.autograd.random import SeedTree
from ical.autograd.tensor import Tensor
from ical.errors import ShapeError
from ical.models.attention import FeedForward, MultiHeadAttention, causal_mask
from ical.presets import DecoderConfig


class ImplicitConstructor(Module):
    """One causal self-attention sublayer and one FFN sublayer over E_feature.

    Both sublayers are wrapped in residual + layer norm, with the decoder's sizes.
    """

    def __init__(self, config: DecoderConfig, seeds: SeedTree) -> None:
        super().__init__()
        d = config.d_model
        self.self_attn = MultiHeadAttention(d, config.heads, seeds.child("self_attn"))
        self.ffn = FeedForward(d, config.ffn_dim, seeds.child("ffn"))
        self.norm1, self.norm2 = LayerNorm(d), LayerNorm(d)
        self.drop1 = Dropout(config.dropout, seeds("drop1"))
        self.drop2 = Dropout(config.dropout, seeds("drop2"))

    def forward(self, features: Tensor, tokens: np.ndarray | None = None) -> Tensor:
        """Maps E_feature ``(B, T, d)`` to I_feature of the same shape.

        Args:
            features: decoder output.
            tokens: decoder input ids; PAD keys are masked out when given.
        """
        b, t, _ = features.shape
        mask = causal_mask(tokens) if tokens is not None else np.broadcast_to(np.tril(np.ones((t, t), dtype=bool)), (b, t, t))
        attended, _ = self.self_attn(features, features, features, mask)
        x = self.norm1(features + self.drop1(attended))
        return self.norm2(x + self.drop2(self.ffn(x)))


class FusionGate(Module):
    """``f = sigmoid(W [E; I] + b)`` and ``F = f * E + (1 - f) * I``."""

    def __init__(self, d_model: int, seeds: SeedTree) -> None:
        super().__init__()
        self.w_att = Linear(2 * d_model, d_model, seeds("w_att"))

    def gate(self, explicit: Tensor, implicit: Tensor) -> Tensor:
        if explicit.shape != implicit.shape:
            raise ShapeError(f"fusion inputs differ: E {explicit.shape}, I {implicit.shape}")
        return self.w_att(F.concat([explicit, implicit], axis=-1)).sigmoid()

    @staticmethod
    def blend(explicit: Tensor, implicit: Tensor, gate: Tensor) -> Tensor:
        return gate * explicit + (1.0 - gate) * implicit

    def forward(self, explicit: Tensor, implicit: Tensor) -> tuple[Tensor, Tensor]:
        gate = self.gate(explicit, implicit)
        return self.blend(explicit, implicit, gate), gate
