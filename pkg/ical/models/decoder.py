"""Transformer decoder with coverage-refined cross-attention."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ical.autograd.nn import Dropout, Embedding, LayerNorm, Module, ModuleList
from ical.autograd.random import SeedTree
from ical.autograd.tensor import Tensor
from ical.models.attention import (
    AttentionRefinement,
    FeedForward,
    MultiHeadAttention,
    causal_mask,
    sinusoidal_1d,
    sinusoidal_2d,
)
from ical.models.encoder import FeatureGrid
from ical.presets import DecoderConfig


@dataclass
class DecoderState:
    """``features`` is E_feature ``(B, T, d_model)``; ``attentions[j]`` is layer j's
    refined cross-attention ``(B, heads, T, H*W)``."""

    features: Tensor
    attentions: list[Tensor] = field(default_factory=list)


class DecoderLayer(Module):
    """Post-norm layer: causal self-attention, image cross-attention, FFN."""

    def __init__(self, config: DecoderConfig, seeds: SeedTree) -> None:
        super().__init__()
        d = config.d_model
        self.self_attn = MultiHeadAttention(d, config.heads, seeds.child("self_attn"))
        self.cross_attn = MultiHeadAttention(d, config.heads, seeds.child("cross_attn"))
        self.ffn = FeedForward(d, config.ffn_dim, seeds.child("ffn"))
        self.norm1, self.norm2, self.norm3 = LayerNorm(d), LayerNorm(d), LayerNorm(d)
        self.drop1 = Dropout(config.dropout, seeds("drop1"))
        self.drop2 = Dropout(config.dropout, seeds("drop2"))
        self.drop3 = Dropout(config.dropout, seeds("drop3"))

    def forward(
        self,
        x: Tensor,
        keys: Tensor,
        memory: Tensor,
        memory_mask: np.ndarray,
        self_mask: np.ndarray,
        refinement: Tensor | None,
    ) -> tuple[Tensor, Tensor]:
        attended, _ = self.self_attn(x, x, x, self_mask)
        x = self.norm1(x + self.drop1(attended))
        attended, weights = self.cross_attn(x, keys, memory, memory_mask[:, None, :], refinement)
        x = self.norm2(x + self.drop2(attended))
        x = self.norm3(x + self.drop3(self.ffn(x)))
        return x, weights


class Decoder(Module):
    """Maps a feature grid and a teacher-forced token prefix to E_feature.

    Token embeddings are layer-normalized and summed with 1-D sinusoidal positions.
    Image keys are the memory plus a 2-D sinusoidal encoding of each cell; values are
    the memory itself. One refinement module is shared by all layers; layer 0 sees
    zero prior attention. ``use_arm = False`` bypasses the refinement entirely.
    """

    def __init__(self, config: DecoderConfig, vocab_size: int, seeds: SeedTree) -> None:
        super().__init__()
        self.config = config
        self.embed = Embedding(vocab_size, config.d_model, seeds("embed"))
        self.embed_norm = LayerNorm(config.d_model)
        self.layers = ModuleList([DecoderLayer(config, seeds.child("layers", i)) for i in range(config.layers)])
        self.arm = AttentionRefinement(config.heads, config.arm_kernel, config.arm_channels, seeds.child("arm"))
        self.use_arm = True

    def forward(self, grid: FeatureGrid, tokens: np.ndarray) -> DecoderState:
        tokens = np.asarray(tokens)
        memory, memory_mask = grid.flatten()
        b, steps = tokens.shape
        h, w = grid.shape
        d = self.config.d_model
        dtype = memory.dtype
        keys = memory + Tensor(sinusoidal_2d(h, w, d, dtype).reshape(h * w, d))
        x = self.embed_norm(self.embed(tokens)) + Tensor(sinusoidal_1d(steps, d, dtype))
        self_mask = causal_mask(tokens)
        state = DecoderState(x)
        previous = None
        for layer in self.layers:
            refinement = self.arm(previous, steps, (h, w), memory_mask) if self.use_arm else None
            x, previous = layer(x, keys, memory, memory_mask, self_mask, refinement)
            state.attentions.append(previous)
        state.features = x
        return state
