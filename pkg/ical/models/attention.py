"""Attention building blocks shared by the decoder and the ICCM."""

from __future__ import annotations

import numpy as np

from ical.autograd import functional as F
from ical.autograd.nn import Conv2d, Linear, Module
from ical.autograd.random import SeedTree
from ical.autograd.tensor import Tensor
from ical.errors import ShapeError
from ical.vocab import PAD


def sinusoidal_1d(length: int, features: int, dtype: np.dtype | type = np.float32) -> np.ndarray:
    """``pe[p, 2i] = sin(p / 10000^(2i/d))`` and ``pe[p, 2i+1] = cos(...)``."""
    position = np.arange(length, dtype=np.float64)[:, None]
    rate = np.power(10000.0, -np.arange(0, features, 2, dtype=np.float64) / features)
    pe = np.zeros((length, features))
    pe[:, 0::2] = np.sin(position * rate)
    pe[:, 1::2] = np.cos(position * rate)[:, : features // 2]
    return pe.astype(dtype)


def sinusoidal_2d(height: int, width: int, features: int, dtype: np.dtype | type = np.float32) -> np.ndarray:
    """Row encoding in the first half of the channels, column encoding in the second.

    Positions are raw grid indices, so a cell's encoding does not depend on the
    padded extent of the grid.
    """
    half = features // 2
    rows = sinusoidal_1d(height, half, np.float64)
    cols = sinusoidal_1d(width, features - half, np.float64)
    pe = np.concatenate(
        [np.broadcast_to(rows[:, None, :], (height, width, half)), np.broadcast_to(cols[None, :, :], (height, width, features - half))],
        axis=-1,
    )
    return pe.astype(dtype)


def causal_mask(tokens: np.ndarray) -> np.ndarray:
    """``(B, T, T)`` mask: query ``t`` sees keys ``<= t`` that are not PAD."""
    t = tokens.shape[1]
    lower = np.tril(np.ones((t, t), dtype=bool))
    return lower[None, :, :] & (tokens != PAD)[:, None, :]


class MultiHeadAttention(Module):
    """Scaled dot-product attention over ``heads`` projected subspaces.

    ``E_i = (Q W_i^q)(K W_i^k)^T / sqrt(d_k)``, ``A_i = softmax(E_i)``,
    ``H_i = A_i (V W_i^v)``, and the heads are concatenated and projected by ``W^o``.
    """

    def __init__(self, d_model: int, heads: int, seeds: SeedTree) -> None:
        super().__init__()
        if d_model % heads:
            raise ShapeError(f"d_model {d_model} not divisible by heads {heads}")
        self.heads = heads
        self.d_k = d_model // heads
        self.q = Linear(d_model, d_model, seeds("q"))
        self.k = Linear(d_model, d_model, seeds("k"))
        self.v = Linear(d_model, d_model, seeds("v"))
        self.o = Linear(d_model, d_model, seeds("o"))

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.d_k).transpose(0, 2, 1, 3)

    def energies(self, query: Tensor, key: Tensor) -> tuple[Tensor, Tensor]:
        q, k = self._split(self.q(query)), self._split(self.k(key))
        return q @ k.transpose(0, 1, 3, 2) * (1.0 / np.sqrt(self.d_k)), q

    def forward(
        self,
        query: Tensor,
        key: Tensor,
        value: Tensor,
        mask: np.ndarray | None = None,
        refinement: Tensor | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Attends ``query (B, Tq, d)`` over ``key``/``value (B, Tk, d)``.

        Args:
            mask: boolean, broadcastable to ``(B, Tq, Tk)``; False keys get weight 0.
            refinement: subtracted from the energies before the softmax,
                ``(B, heads, Tq, Tk)``.

        Returns:
            The projected output ``(B, Tq, d)`` and the weights ``(B, heads, Tq, Tk)``.
        """
        if query.shape[-1] != key.shape[-1] or key.shape[:2] != value.shape[:2]:
            raise ShapeError(f"attention shapes disagree: q {query.shape}, k {key.shape}, v {value.shape}")
        scores, _ = self.energies(query, key)
        if refinement is not None:
            scores = scores - refinement
        weights = F.softmax(scores, axis=-1, mask=None if mask is None else mask[:, None, :, :])
        b, tq = query.shape[:2]
        heads = weights @ self._split(self.v(value))
        out = heads.transpose(0, 2, 1, 3).reshape(b, tq, self.heads * self.d_k)
        return self.o(out), weights


class AttentionRefinement(Module):
    """Coverage-based energy refinement.

    The coverage of step ``t`` is the head-averaged attention of the previous layer,
    summed over the steps before ``t``. It is laid out on the image grid, convolved
    (``kernel`` x ``kernel``, ``channels`` maps), passed through ReLU and projected to
    one refinement map per head; the result is zero on padded image cells.
    """

    def __init__(self, heads: int, kernel: int, channels: int, seeds: SeedTree) -> None:
        super().__init__()
        self.heads = heads
        self.conv = Conv2d(1, channels, kernel, seeds("conv"), padding=kernel // 2)
        self.proj = Linear(channels, heads, seeds("proj"), bias=False)

    def coverage(self, previous: Tensor | None, batch: int, steps: int, cells: int, dtype: np.dtype) -> Tensor:
        if previous is None:
            return Tensor(np.zeros((batch, steps, cells), dtype=dtype))
        return F.cumsum(previous.mean(axis=1), axis=1, exclusive=True)

    def forward(self, previous: Tensor | None, steps: int, grid: tuple[int, int], mask: np.ndarray) -> Tensor:
        """Returns the ``(B, heads, T, H*W)`` amount to subtract from the energies.

        Args:
            previous: refined attention of the previous layer, or None for layer 0.
            steps: number of decoding steps ``T``.
            grid: ``(H, W)`` of the feature grid.
            mask: ``(B, H*W)`` validity of the flattened grid.
        """
        b, cells = mask.shape
        h, w = grid
        cov = self.coverage(previous, b, steps, cells, self.conv.weight.dtype)
        maps = self.conv(cov.reshape(b * steps, 1, h, w)).relu()
        maps = self.proj(maps.transpose(0, 2, 3, 1))
        r = maps.reshape(b, steps, cells, self.heads).transpose(0, 3, 1, 2)
        return r * Tensor(mask[:, None, None, :].astype(r.dtype))


class FeedForward(Module):
    def __init__(self, d_model: int, hidden: int, seeds: SeedTree) -> None:
        super().__init__()
        self.fc1 = Linear(d_model, hidden, seeds("fc1"))
        self.fc2 = Linear(hidden, d_model, seeds("fc2"))

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())
