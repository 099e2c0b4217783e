"""Stroke rasterization into ink-high grayscale images."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ical.data.inkml import InkSample
from ical.errors import ConfigError

MARGIN = 8
MIN_HEIGHT = 2 * MARGIN + 2


def line_pixels(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """8-connected Bresenham segment from ``(x0, y0)`` to ``(x1, y1)``, endpoints included."""
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    pixels = []
    while True:
        pixels.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return np.asarray(pixels, dtype=np.int64)


def stroke_thickness(target_height: int) -> int:
    return max(1, int(round(2 * target_height / 128)))


def dilate(ink: np.ndarray, size: int) -> np.ndarray:
    """Square dilation; the pixel sits at offset ``(size - 1) // 2`` of its block."""
    if size <= 1:
        return ink
    lo = (size - 1) // 2
    padded = np.pad(ink, ((lo, size - 1 - lo), (lo, size - 1 - lo)))
    return sliding_window_view(padded, (size, size)).max(axis=(-2, -1))


def normalize_points(sample: InkSample, target_height: int, margin: int = MARGIN) -> tuple[list[np.ndarray], int]:
    """Maps strokes to integer pixel coordinates; returns them and the image width.

    The bounding-box height spans the rows between the margins. A flat sample
    (zero height) is scaled from its width and centred vertically; a single point
    becomes a dot.

    Raises:
        ConfigError: if the margins leave fewer than two rows for the strokes.
    """
    span = target_height - 2 * margin - 1
    if span <= 0:
        raise ConfigError(f"image height {target_height} leaves no room inside a {margin}px margin")
    points = np.concatenate(sample.strokes, axis=0)
    lo, hi = points.min(axis=0), points.max(axis=0)
    width, height = hi - lo
    if height > 0:
        scale = span / height
    elif width > 0:
        scale = span / width
    else:
        scale = 0.0
    offset_y = margin + (span - height * scale) / 2.0
    image_width = int(round(width * scale)) + 2 * margin + 1
    strokes = []
    for stroke in sample.strokes:
        xy = np.empty_like(stroke)
        xy[:, 0] = (stroke[:, 0] - lo[0]) * scale + margin
        xy[:, 1] = (stroke[:, 1] - lo[1]) * scale + offset_y
        strokes.append(np.rint(xy).astype(np.int64))
    return strokes, image_width


def rasterize(sample: InkSample, target_height: int = 128, thickness: int | None = None) -> np.ndarray:
    """Draws the strokes as ink 1.0 on a 0.0 background.

    Returns:
        float32 array of shape ``(target_height, W)``; ``W`` follows the aspect ratio.
    """
    thickness = stroke_thickness(target_height) if thickness is None else thickness
    strokes, image_width = normalize_points(sample, target_height)
    ink = np.zeros((target_height, image_width), dtype=bool)
    for stroke in strokes:
        if len(stroke) == 1:
            ink[stroke[0, 1], stroke[0, 0]] = True
            continue
        for (x0, y0), (x1, y1) in zip(stroke[:-1], stroke[1:]):
            px = line_pixels(int(x0), int(y0), int(x1), int(y1))
            ink[px[:, 1], px[:, 0]] = True
    return dilate(ink, thickness).astype(np.float32)
