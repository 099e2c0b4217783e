"""Loss, optimizer, checkpoints and the training loop."""

from ical.train.loss import LossReport, LossToggles, token_weights, total_loss, weighted_cross_entropy
from ical.train.optim import SGD, ReduceLROnPlateau
from ical.train.trainer import Trainer, TrainSettings

__all__ = [
    "SGD",
    "LossReport",
    "LossToggles",
    "ReduceLROnPlateau",
    "TrainSettings",
    "Trainer",
    "token_weights",
    "total_loss",
    "weighted_cross_entropy",
]
