"""Deterministic synthetic handwritten-expression stand-ins.

Expressions come from a small grammar over digits, lower-case letters, ``+ - =``,
superscripts, subscripts and ``\\frac``, nested at most two levels deep. Each one is
typeset from the bitmap font with a baseline-aware box layout, so scripts are raised
or lowered and fractions are stacked around a bar.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass

import numpy as np

from ical.autograd.random import derive_rng
from ical.data.font import GLYPH_ROWS, glyph
from ical.data.raster import MARGIN

logger = logging.getLogger(__name__)

ATOMS = tuple(string.digits + string.ascii_lowercase)
OPERATORS = ("+", "-", "=")
MAX_DEPTH = 2
P_FRAC = 0.15
P_SUP = 0.25
P_SUB = 0.2
BASE_SCALE = 3
SCRIPT_SCALE = 2


@dataclass(frozen=True)
class Box:
    """Ink mask plus the row its content sits on (counted from the top)."""

    ink: np.ndarray
    baseline: int

    @property
    def height(self) -> int:
        return self.ink.shape[0]

    @property
    def width(self) -> int:
        return self.ink.shape[1]


@dataclass(frozen=True)
class SynthSample:
    id: str
    image: np.ndarray
    label: str


def place(parts: list[tuple[Box, int, int]]) -> Box:
    """Composes boxes given ``(box, x, shift)``; ``shift`` moves a box's baseline down."""
    top = min(shift - box.baseline for box, _, shift in parts)
    bottom = max(shift - box.baseline + box.height for box, _, shift in parts)
    width = max(x + box.width for box, x, _ in parts)
    ink = np.zeros((bottom - top, width), dtype=bool)
    for box, x, shift in parts:
        y = shift - box.baseline - top
        ink[y : y + box.height, x : x + box.width] |= box.ink
    return Box(ink, -top)


def hcat(boxes: list[Box], gap: int) -> Box:
    parts, x = [], 0
    for box in boxes:
        parts.append((box, x, 0))
        x += box.width + gap
    return place(parts)


def glyph_box(symbol: str, scale: int) -> Box:
    ink = glyph(symbol, scale)
    return Box(ink, ink.shape[0])


def fraction_box(numerator: Box, denominator: Box, scale: int) -> Box:
    gap = scale
    thickness = max(1, scale // 2)
    width = max(numerator.width, denominator.width) + 2 * scale
    rows = numerator.height + gap + thickness + gap + denominator.height
    ink = np.zeros((rows, width), dtype=bool)
    x = (width - numerator.width) // 2
    ink[: numerator.height, x : x + numerator.width] = numerator.ink
    bar = numerator.height + gap
    ink[bar : bar + thickness, :] = True
    x = (width - denominator.width) // 2
    ink[rows - denominator.height :, x : x + denominator.width] = denominator.ink
    return Box(ink, bar + thickness // 2 + GLYPH_ROWS * scale // 2)


def _term(rng: np.random.Generator, depth: int, scale: int) -> tuple[list[str], Box]:
    r = rng.random() if depth < MAX_DEPTH else 1.0
    inner_scale = min(scale, SCRIPT_SCALE)
    if r < P_FRAC:
        num_tokens, num = _expression(rng, depth + 1, scale)
        den_tokens, den = _expression(rng, depth + 1, scale)
        tokens = ["\\frac", "{", *num_tokens, "}", "{", *den_tokens, "}"]
        return tokens, fraction_box(num, den, scale)
    atom = str(rng.choice(ATOMS))
    base = glyph_box(atom, scale)
    if r < P_FRAC + P_SUP:
        inner_tokens, script = _expression(rng, depth + 1, inner_scale)
        shift = -(base.height // 2)
        return [atom, "^", "{", *inner_tokens, "}"], place([(base, 0, 0), (script, base.width + scale, shift)])
    if r < P_FRAC + P_SUP + P_SUB:
        inner_tokens, script = _expression(rng, depth + 1, inner_scale)
        shift = script.height // 2
        return [atom, "_", "{", *inner_tokens, "}"], place([(base, 0, 0), (script, base.width + scale, shift)])
    return [atom], base


def _expression(rng: np.random.Generator, depth: int, scale: int) -> tuple[list[str], Box]:
    terms = 1 + int(rng.integers(0, 3 if depth == 0 else 2))
    tokens: list[str] = []
    boxes: list[Box] = []
    for k in range(terms):
        if k:
            op = str(rng.choice(OPERATORS))
            tokens.append(op)
            boxes.append(glyph_box(op, scale))
        term_tokens, box = _term(rng, depth, scale)
        tokens.extend(term_tokens)
        boxes.append(box)
    return tokens, hcat(boxes, gap=scale)


def render(box: Box) -> np.ndarray:
    return np.pad(box.ink, MARGIN).astype(np.float32)


def synth_generate(seed: int, n: int) -> list[SynthSample]:
    """Generates ``n`` labeled images; identical for identical ``seed``.

    Raises:
        ValueError: if ``n`` < 1.
    """
    if n < 1:
        raise ValueError(f"synth n {n} out of range [1, inf)")
    rng = derive_rng(seed, "synth")
    samples = []
    for i in range(n):
        tokens, box = _expression(rng, 0, BASE_SCALE)
        samples.append(SynthSample(f"synth_{i:05d}", render(box), " ".join(tokens)))
    logger.debug(f"generated {n} synthetic samples (seed {seed})")
    return samples


def synth_symbols() -> list[str]:
    """Every symbol the grammar can emit, in a fixed order."""
    return [*ATOMS, *OPERATORS, "^", "_", "{", "}", "\\frac"]
