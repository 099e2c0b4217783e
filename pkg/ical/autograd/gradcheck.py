"""Central finite-difference gradient checks."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from ical.autograd.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    checked: int
    max_rel_error: float
    max_abs_error: float
    passed: bool


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def numeric_derivative(loss_fn: Callable[[], Tensor], array: np.ndarray, index: tuple[int, ...], step: float) -> float:
    original = array[index]
    array[index] = original + step
    plus = loss_fn().item()
    array[index] = original - step
    minus = loss_fn().item()
    array[index] = original
    return (plus - minus) / (2.0 * step)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    *,
    step: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> list[GradCheckResult]:
    """Compares tape gradients against central differences.

    ``loss_fn`` must recompute the scalar loss from the current contents of
    ``tensors``; entries are perturbed in place. An entry passes when its relative
    error is at most ``rtol`` or its absolute error at most ``atol``. Entries that
    fail are re-measured with ``step / 10`` so a ReLU or max-pool kink lying inside
    the first stencil does not count as a mismatch.

    Args:
        loss_fn: closure returning a scalar tensor.
        tensors: named tensors with ``requires_grad`` set.
        step: finite-difference step.
        rtol: relative tolerance.
        atol: absolute tolerance.
        max_entries: entries checked per tensor; all when None.
        rng: chooses the entries when ``max_entries`` is set.
    """
    for t in tensors.values():
        t.grad = None
    loss_fn().backward()
    rng = rng or np.random.default_rng(0)
    results = []
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        indices = list(np.ndindex(t.shape))
        if max_entries is not None and len(indices) > max_entries:
            picks = rng.choice(len(indices), size=max_entries, replace=False)
            indices = [indices[i] for i in sorted(picks)]
        worst_rel = worst_abs = 0.0
        passed = True
        for index in indices:
            a = float(analytic[index])
            n = numeric_derivative(loss_fn, t.data, index, step)
            if relative_error(a, n) > rtol and abs(a - n) > atol:
                n = numeric_derivative(loss_fn, t.data, index, step / 10)
            rel, err = relative_error(a, n), abs(a - n)
            worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, err)
            if rel > rtol and err > atol:
                passed = False
                logger.debug(f"{name}{index}: analytic {a:.6e} numeric {n:.6e}")
        results.append(GradCheckResult(name, len(indices), worst_rel, worst_abs, passed))
    return results
