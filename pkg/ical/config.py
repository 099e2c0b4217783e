"""Paths and run configuration.

Can overwrite the run configuration with an optional `config.yml` file in the current
working directory; command-line flags override both.
"""

from __future__ import annotations

import logging
import pathlib
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ical.data.raster import MIN_HEIGHT
from ical.errors import ConfigError
from ical.presets import PRESETS

logger = logging.getLogger(__name__)

cwd = pathlib.Path.cwd()
cwd_config = cwd / "config.yml"
module = pathlib.Path(__file__).parent.absolute()
repo = module.parent


class Path:
    module = module
    repo = repo
    resources = module / "resources"
    crohme_vocab = resources / "crohme_vocab.txt"
    cwd_config = cwd_config


PATH = Path()


class RunConfig(BaseModel):
    """Everything a CLI command needs; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["synth", "train", "eval", "predict", "gradcheck", "params"] = "train"
    preset: str = "toy"
    seed: int = 7
    data_dir: pathlib.Path | None = None
    val_dir: pathlib.Path | None = None
    vocab_path: pathlib.Path | None = None
    out_dir: pathlib.Path = pathlib.Path("runs/ical")
    checkpoint: list[pathlib.Path] = Field(default_factory=list)
    batch_size: int = Field(default=8, ge=1)
    epochs: int = Field(default=200, ge=0)
    lr: float = Field(default=0.08, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=1e-4, ge=0)
    patience: int = Field(default=3, ge=1)
    lr_factor: float = Field(default=0.25, gt=0, lt=1)
    initial_loss: bool = True
    implicit_loss: bool = True
    fusion_loss: bool = True
    beam: int = Field(default=10, ge=1)
    max_len: int = Field(default=200, ge=1)
    precision: Literal["float32", "float64"] = "float32"
    n: int = Field(default=100, ge=1)
    image_height: int = Field(default=128, ge=MIN_HEIGHT)
    workers: int = Field(default=1, ge=1)
    eval_every: int = Field(default=1, ge=1)

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: str) -> str:
        if value not in PRESETS:
            raise ValueError(f"preset {value!r} not in {sorted(PRESETS)}")
        return value

    @field_validator("initial_loss")
    @classmethod
    def _initial_always_on(cls, value: bool) -> bool:
        if not value:
            raise ValueError("initial_loss cannot be disabled")
        return value

    def dump(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def read_config_file(path: str | pathlib.Path) -> dict[str, Any]:
    path = pathlib.Path(path)
    if not path.is_file():
        logger.error(f"Config file not found: {path}")
        raise ConfigError(f"No such config file: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        logger.error(f"Config file {path} is not valid YAML: {e}")
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    return data


def load_run_config(
    path: str | pathlib.Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Builds the effective run configuration.

    Args:
        path: YAML file; falls back to ``config.yml`` in the working directory.
        overrides: values that win over the file, typically parsed CLI flags.
            ``None`` values are ignored.

    Raises:
        ConfigError: missing or malformed file, unknown keys, out-of-range values.
    """
    values: dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
    elif PATH.cwd_config.is_file():
        logger.info(f"Using {PATH.cwd_config}")
        values.update(read_config_file(PATH.cwd_config))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if isinstance(values.get("checkpoint"), str | pathlib.Path):
        values["checkpoint"] = [values["checkpoint"]]
    try:
        return RunConfig(**values)
    except ValidationError as e:
        logger.error(f"Invalid run configuration: {e}")
        raise ConfigError(str(e)) from None


__all__ = ["PATH", "RunConfig", "load_run_config"]
