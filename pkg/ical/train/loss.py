"""Three-part training loss.

``total = initial + implicit + fusion``:

- initial: cross-entropy of the main head on E_feature;
- fusion: cross-entropy of the same head on the fused features;
- implicit: class-weighted cross-entropy of the implicit head on I_feature, with
  ``w_c = 1 + ln(1 + 1 / (f_c + eps))`` and ``f_c`` the relative frequency of class
  ``c`` among the batch's non-PAD implicit targets (both directions).

Each component is computed for the L2R and R2L streams and the two are averaged.
Cross-entropies average over non-PAD positions; the weighted one divides by the
summed weights of those positions.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ical.autograd import functional as F
from ical.autograd.tensor import Tensor
from ical.data.batch import Batch
from ical.errors import ConfigError, ContractError
from ical.models.ical import ICALModel
from ical.presets import IMPLICIT_CLASSES
from ical.vocab import PAD, Direction

EPS = 1e-6
COMPONENTS = ("initial", "implicit", "fusion")


@dataclass(frozen=True)
class LossToggles:
    """Which loss components are active. The ICCM runs only if one of its
    components is on."""

    initial: bool = True
    implicit: bool = True
    fusion: bool = True

    REGIMES = {
        "baseline": (True, False, False),
        "implicit": (True, True, False),
        "fusion": (True, False, True),
        "full": (True, True, True),
    }

    @classmethod
    def regime(cls, name: str) -> LossToggles:
        try:
            return cls(*cls.REGIMES[name])
        except KeyError:
            raise ConfigError(f"unknown loss regime {name!r}, expected one of {sorted(cls.REGIMES)}") from None

    @property
    def use_iccm(self) -> bool:
        return self.implicit or self.fusion

    @property
    def active(self) -> tuple[str, ...]:
        return tuple(name for name in COMPONENTS if getattr(self, name))


@dataclass
class LossReport:
    initial: float = 0.0
    implicit: float = 0.0
    fusion: float = 0.0
    total: float = 0.0
    per_direction: dict[Direction, dict[str, float]] = field(default_factory=dict)

    def as_dict(self, toggles: LossToggles | None = None) -> dict[str, float]:
        names = toggles.active if toggles is not None else COMPONENTS
        return {**{name: getattr(self, name) for name in names}, "total": self.total}


def token_weights(implicit_targets: Sequence[np.ndarray], num_classes: int = IMPLICIT_CLASSES, eps: float = EPS) -> np.ndarray:
    """Per-class weights from the relative class frequencies over non-PAD targets."""
    counts = np.zeros(num_classes, dtype=np.float64)
    for targets in implicit_targets:
        valid = np.asarray(targets)[np.asarray(targets) != PAD]
        counts += np.bincount(valid, minlength=num_classes)[:num_classes]
    total = counts.sum()
    freq = counts / total if total > 0 else counts
    return weight_from_frequency(freq, eps)


def weight_from_frequency(freq: np.ndarray | float, eps: float = EPS) -> np.ndarray:
    return 1.0 + np.log(1.0 + 1.0 / (np.asarray(freq, dtype=np.float64) + eps))


def _target_log_probs(logits: Tensor, targets: np.ndarray) -> Tensor:
    b, t = targets.shape
    log_probs = F.log_softmax(logits, axis=-1)
    return log_probs[np.arange(b)[:, None], np.arange(t)[None, :], targets]


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over the non-PAD positions of ``targets``."""
    valid = (targets != PAD).astype(logits.dtype)
    picked = _target_log_probs(logits, targets)
    return -(picked * Tensor(valid)).sum() * (1.0 / max(float(valid.sum()), 1.0))


def weighted_cross_entropy(logits: Tensor, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    """``-sum(w_y log p_y) / sum(w_y)`` over the non-PAD positions of ``targets``."""
    w = np.where(targets != PAD, weights[targets], 0.0).astype(logits.dtype)
    picked = _target_log_probs(logits, targets)
    return -(picked * Tensor(w)).sum() * (1.0 / max(float(w.sum()), 1e-12))


def total_loss(model: ICALModel, batch: Batch, toggles: LossToggles) -> tuple[Tensor, LossReport]:
    """Encodes the batch once and sums the active components over both directions.

    Raises:
        ContractError: ICCM components requested from a model built without one.
    """
    if toggles.use_iccm and not model.has_iccm:
        raise ContractError("implicit/fusion loss needs a model built with the ICCM")
    grid = model.encode(batch.images, batch.image_mask)
    weights = token_weights([batch.implicit[d] for d in Direction]) if toggles.implicit else None
    sums: dict[str, Tensor] = {}
    report = LossReport()
    for direction in Direction:
        out = model.forward_features(grid, batch.inputs(direction), run_iccm=toggles.use_iccm)
        targets = batch.outputs(direction)
        parts = {"initial": cross_entropy(out.initial_logits, targets)}
        if toggles.implicit:
            parts["implicit"] = weighted_cross_entropy(out.implicit_logits, batch.implicit[direction], weights)
        if toggles.fusion:
            parts["fusion"] = cross_entropy(out.fused_logits, targets)
        report.per_direction[direction] = {name: part.item() for name, part in parts.items()}
        for name, part in parts.items():
            sums[name] = sums[name] + part if name in sums else part
    components = {name: value * 0.5 for name, value in sums.items()}
    loss = components["initial"]
    for name in ("implicit", "fusion"):
        if name in components:
            loss = loss + components[name]
    for name, value in components.items():
        setattr(report, name, value.item())
    report.total = loss.item()
    return loss, report
