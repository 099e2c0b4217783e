"""Checkpoint files.

A checkpoint ``<dir>/<tag>`` is three files:

- ``<tag>.params``: model parameters and buffers (parameter container format);
- ``<tag>.optim``: optimizer velocities (same format);
- ``<tag>.yaml``: epoch, scheduler state and the run identity.
"""

from __future__ import annotations

import logging
import pathlib
from typing import Any

import yaml

from ical.autograd import serialize
from ical.autograd.nn import Module
from ical.errors import CheckpointError
from ical.train.optim import SGD, ReduceLROnPlateau

logger = logging.getLogger(__name__)

BEST = "best"
LAST = "last"


def save_checkpoint(
    directory: str | pathlib.Path,
    tag: str,
    model: Module,
    optimizer: SGD | None = None,
    scheduler: ReduceLROnPlateau | None = None,
    **meta: Any,
) -> pathlib.Path:
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    serialize.save(directory / f"{tag}.params", model.state_dict())
    state: dict[str, Any] = dict(meta)
    if optimizer is not None:
        serialize.save(directory / f"{tag}.optim", optimizer.state_dict())
    if scheduler is not None:
        state.update(scheduler.state())
    (directory / f"{tag}.yaml").write_text(yaml.safe_dump(state, sort_keys=False))
    logger.debug(f"Saved checkpoint {directory / tag}")
    return directory / f"{tag}.params"


def params_path(path: str | pathlib.Path) -> pathlib.Path:
    """Accepts a ``.params`` file, a checkpoint stem or a directory (uses ``best``)."""
    path = pathlib.Path(path)
    if path.is_dir():
        path = path / f"{BEST}.params"
    elif path.suffix != ".params":
        path = path.with_suffix(".params")
    return path


def load_params(path: str | pathlib.Path, model: Module) -> None:
    """Loads parameters and buffers into ``model``.

    Raises:
        CheckpointError: missing file, bad container or mismatched names/shapes.
    """
    model.load_state_dict(serialize.load(params_path(path)))


def load_checkpoint(
    directory: str | pathlib.Path,
    tag: str,
    model: Module,
    optimizer: SGD,
    scheduler: ReduceLROnPlateau,
) -> dict[str, Any]:
    """Restores a full training state; returns the YAML metadata."""
    directory = pathlib.Path(directory)
    meta_path = directory / f"{tag}.yaml"
    if not meta_path.is_file():
        logger.error(f"Checkpoint metadata not found: {meta_path}")
        raise CheckpointError(f"No such checkpoint: {directory / tag}")
    meta = yaml.safe_load(meta_path.read_text()) or {}
    model.load_state_dict(serialize.load(directory / f"{tag}.params"))
    optimizer.load_state_dict(serialize.load(directory / f"{tag}.optim"))
    scheduler.load_state(meta)
    return meta


def read_meta(path: str | pathlib.Path) -> dict[str, Any]:
    """YAML metadata stored beside a ``.params`` file; empty if there is none."""
    meta_path = params_path(path).with_suffix(".yaml")
    if not meta_path.is_file():
        return {}
    return yaml.safe_load(meta_path.read_text()) or {}
