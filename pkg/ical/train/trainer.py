"""Training loop."""

from __future__ import annotations

import logging
import pathlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ical.autograd.random import derive_rng
from ical.data.batch import iter_batches
from ical.data.dataset import Sample
from ical.infer.evaluate import evaluate
from ical.models.ical import ICALModel
from ical.train import checkpoint
from ical.train.loss import COMPONENTS, LossReport, LossToggles, total_loss
from ical.train.optim import SGD, ReduceLROnPlateau
from ical.vocab import Vocab

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    losses: dict[str, float]
    exprate: float | None = None
    step_totals: list[float] = field(default_factory=list)


@dataclass
class TrainSettings:
    seed: int = 7
    batch_size: int = 8
    epochs: int = 200
    lr: float = 0.08
    momentum: float = 0.9
    weight_decay: float = 1e-4
    patience: int = 3
    lr_factor: float = 0.25
    eval_every: int = 1
    val_beam: int = 1
    max_len: int = 200
    workers: int = 1


class Trainer:
    """Bidirectional mini-batch training with plateau scheduling.

    Every epoch reseeds dropout and the shuffle from ``(seed, epoch)``, so resuming
    from a checkpoint replays the remaining epochs exactly.

    Args:
        model: model to train in place.
        vocab: main vocabulary.
        train: training samples.
        val: validation samples; the training samples when None.
        toggles: active loss components.
        settings: optimizer and loop parameters.
        out_dir: checkpoints go to ``out_dir / "checkpoints"``; None disables them.
        meta: extra keys written into every checkpoint's YAML file.
    """

    def __init__(
        self,
        model: ICALModel,
        vocab: Vocab,
        train: list[Sample],
        val: list[Sample] | None,
        toggles: LossToggles,
        settings: TrainSettings,
        out_dir: pathlib.Path | None = None,
        meta: dict[str, Any] | None = None,
    ) -> None:
        self.model = model
        self.vocab = vocab
        self.train_samples = train
        self.val_samples = val if val is not None else train
        self.toggles = toggles
        self.settings = settings
        self.checkpoint_dir = pathlib.Path(out_dir) / "checkpoints" if out_dir is not None else None
        self.optimizer = SGD(model.named_parameters(), settings.lr, settings.momentum, settings.weight_decay)
        self.scheduler = ReduceLROnPlateau(self.optimizer, settings.lr_factor, settings.patience)
        self.start_epoch = 0
        self.history: list[EpochRecord] = []
        self.meta = dict(meta or {})

    def resume(self, directory: pathlib.Path | None = None, tag: str = checkpoint.LAST) -> int:
        directory = directory or self.checkpoint_dir
        meta = checkpoint.load_checkpoint(directory, tag, self.model, self.optimizer, self.scheduler)
        self.start_epoch = int(meta["epoch"]) + 1
        logger.info(f"Resumed from {directory / tag} at epoch {self.start_epoch}")
        return self.start_epoch

    def train_epoch(self, epoch: int) -> EpochRecord:
        s = self.settings
        self.model.train()
        self.model.reseed_dropout(s.seed, epoch)
        rng = derive_rng(s.seed, "shuffle", epoch)
        sums = dict.fromkeys(COMPONENTS, 0.0)
        record = EpochRecord(epoch, self.optimizer.lr, {})
        steps = 0
        for step, batch in enumerate(iter_batches(self.train_samples, self.vocab, s.batch_size, rng)):
            self.model.zero_grad()
            loss, report = total_loss(self.model, batch, self.toggles)
            loss.backward()
            self.optimizer.step()
            self._accumulate(sums, report)
            record.step_totals.append(report.total)
            steps += 1
            logger.debug(f"epoch {epoch} step {step}: {self._format(report.as_dict(self.toggles))}")
        record.losses = {name: sums[name] / max(steps, 1) for name in self.toggles.active}
        record.losses["total"] = sum(record.losses.values())
        return record

    @staticmethod
    def _accumulate(sums: dict[str, float], report: LossReport) -> None:
        for name in COMPONENTS:
            sums[name] += getattr(report, name)

    @staticmethod
    def _format(values: dict[str, float]) -> str:
        return " ".join(f"{k}={v:.4f}" for k, v in values.items())

    def validate(self) -> float:
        result, _ = evaluate(
            self.model,
            self.val_samples,
            self.vocab,
            beam=self.settings.val_beam,
            max_len=self.settings.max_len,
            workers=self.settings.workers,
            joint=False,
        )
        return result.exprate

    def fit(self) -> list[EpochRecord]:
        s = self.settings
        for epoch in range(self.start_epoch, s.epochs):
            record = self.train_epoch(epoch)
            line = f"epoch {epoch}: {self._format(record.losses)} lr={record.lr:.6g}"
            if (epoch + 1) % s.eval_every == 0 or epoch == s.epochs - 1:
                record.exprate = self.validate()
                line += f" val_exprate={record.exprate:.4f}"
                improved = record.exprate > self.scheduler.best
                self.scheduler.step(record.exprate)
                if improved and self.checkpoint_dir is not None:
                    checkpoint.save_checkpoint(self.checkpoint_dir, checkpoint.BEST, self.model, epoch=epoch, **self.meta)
            logger.info(line)
            self.history.append(record)
            if self.checkpoint_dir is not None:
                checkpoint.save_checkpoint(
                    self.checkpoint_dir, checkpoint.LAST, self.model, self.optimizer, self.scheduler, epoch=epoch, seed=s.seed, **self.meta
                )
        if self.checkpoint_dir is not None and not (self.checkpoint_dir / f"{checkpoint.BEST}.params").is_file():
            checkpoint.save_checkpoint(self.checkpoint_dir, checkpoint.BEST, self.model, epoch=s.epochs - 1, **self.meta)
        return self.history

    @property
    def best_exprate(self) -> float:
        return float(self.scheduler.best) if np.isfinite(self.scheduler.best) else 0.0
