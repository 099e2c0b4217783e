"""Mini-batch SGD with momentum and a reduce-on-plateau schedule."""

from __future__ import annotations

import logging
from collections import OrderedDict
from collections.abc import Iterable

import numpy as np

from ical.autograd.nn import Parameter
from ical.errors import CheckpointError, NumericError

logger = logging.getLogger(__name__)


class SGD:
    """Classical momentum SGD with coupled weight decay.

    ``v <- momentum * v + g + weight_decay * theta`` then ``theta <- theta - lr * v``.

    Args:
        params: ``(name, parameter)`` pairs, e.g. ``model.named_parameters()``.
        lr: learning rate.
        momentum: velocity decay.
        weight_decay: L2 coefficient folded into the gradient.
    """

    def __init__(
        self, params: Iterable[tuple[str, Parameter]], lr: float = 0.08, momentum: float = 0.9, weight_decay: float = 1e-4
    ) -> None:
        self.params: OrderedDict[str, Parameter] = OrderedDict(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self) -> None:
        """Applies one update from the gradients held by the parameters.

        Raises:
            NumericError: if any gradient is NaN or infinite; no parameter changes.
        """
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for {name}")
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else 0.0
            v = self.momentum * self.velocity[name] + grad + self.weight_decay * p.data
            self.velocity[name] = v.astype(p.data.dtype, copy=False)
            p.data = (p.data - self.lr * v).astype(p.data.dtype, copy=False)

    def state_dict(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((f"velocity.{name}", v) for name, v in self.velocity.items())

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, v in self.velocity.items():
            key = f"velocity.{name}"
            if key not in state or state[key].shape != v.shape:
                raise CheckpointError(f"optimizer state for {name} missing or mis-shaped")
            self.velocity[name] = np.array(state[key], dtype=v.dtype)


class ReduceLROnPlateau:
    """Multiplies the learning rate by ``factor`` once the tracked metric (higher is
    better) has gone ``patience`` evaluations without improving."""

    def __init__(self, optimizer: SGD, factor: float = 0.25, patience: int = 3) -> None:
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.best = -np.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> bool:
        """Records one evaluation; returns True when the rate was reduced."""
        if metric > self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs < self.patience:
            return False
        self.optimizer.lr *= self.factor
        self.bad_epochs = 0
        logger.info(f"No improvement for {self.patience} evaluations; lr -> {self.optimizer.lr:.6g}")
        return True

    def state(self) -> dict[str, float]:
        return {"lr": self.optimizer.lr, "best": float(self.best), "bad_epochs": self.bad_epochs}

    def load_state(self, state: dict[str, float]) -> None:
        self.optimizer.lr = float(state["lr"])
        self.best = float(state["best"])
        self.bad_epochs = int(state["bad_epochs"])
