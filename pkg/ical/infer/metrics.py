"""Expression-level recognition metrics."""

from __future__ import annotations

import csv
import pathlib
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np


def token_edit_distance(pred: Sequence, gold: Sequence) -> int:
    """Levenshtein distance with unit insert, delete and substitute costs.

    >>> token_edit_distance(["a", "+", "b"], ["a", "-", "b"])
    1
    """
    if len(pred) < len(gold):
        pred, gold = gold, pred
    previous = list(range(len(gold) + 1))
    for i, p in enumerate(pred, start=1):
        current = [i]
        for j, g in enumerate(gold, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (p != g)))
        previous = current
    return previous[-1]


@dataclass
class EvalResult:
    """ExpRate and the 1- and 2-error tolerant rates, as fractions."""

    exprate: float
    leq1: float
    leq2: float
    distances: list[int] = field(default_factory=list)
    ids: list[str] = field(default_factory=list)

    @classmethod
    def from_distances(cls, distances: Sequence[int], ids: Sequence[str] | None = None) -> EvalResult:
        d = np.asarray(distances, dtype=np.int64)
        if d.size == 0:
            return cls(0.0, 0.0, 0.0, [], list(ids or []))
        return cls(
            exprate=float(np.mean(d == 0)),
            leq1=float(np.mean(d <= 1)),
            leq2=float(np.mean(d <= 2)),
            distances=d.tolist(),
            ids=list(ids) if ids is not None else [str(i) for i in range(d.size)],
        )

    def summary(self) -> dict[str, float]:
        return {"exprate": self.exprate, "leq1": self.leq1, "leq2": self.leq2, "samples": len(self.distances)}

    def as_text(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in self.summary().items())


def score_predictions(predictions: Sequence[Sequence[str]], golds: Sequence[Sequence[str]], ids: Sequence[str] | None = None) -> EvalResult:
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions for {len(golds)} references")
    return EvalResult.from_distances([token_edit_distance(p, g) for p, g in zip(predictions, golds)], ids)


def aggregate(results: Sequence[EvalResult]) -> dict[str, float]:
    """Mean and population standard deviation of each rate across runs."""
    out: dict[str, float] = {"runs": len(results)}
    for key in ("exprate", "leq1", "leq2"):
        values = np.array([getattr(r, key) for r in results], dtype=np.float64)
        out[f"{key}_mean"] = float(values.mean()) if values.size else 0.0
        out[f"{key}_std"] = float(values.std()) if values.size else 0.0
    return out


def write_per_sample_csv(path: str | pathlib.Path, result: EvalResult, predictions: Sequence[str], golds: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "distance", "prediction", "reference"])
        for row in zip(result.ids, result.distances, predictions, golds):
            writer.writerow(row)
