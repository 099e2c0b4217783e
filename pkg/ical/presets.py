"""Model hyper-parameters.

- EncoderConfig for the DenseNet backbone
- DecoderConfig for the ARM Transformer decoder (also sizes the ICCM)
- ModelConfig bundling both, with the two built-in presets
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, model_validator

from ical.errors import ConfigError

IMPLICIT_CLASSES = 8  # PAD, SOS, EOS, <space>, ^, _, {, }


class EncoderConfig(BaseModel):
    """DenseNet encoder parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_blocks: int = 3
    layers_per_block: int = 16
    growth_rate: int = 24
    dropout: float = 0.2
    d_model: int = 256

    @model_validator(mode="after")
    def _check(self) -> EncoderConfig:
        for name in ("num_blocks", "growth_rate", "d_model"):
            if getattr(self, name) < 1:
                raise ValueError(f"encoder {name} {getattr(self, name)} out of range [1, inf)")
        if self.layers_per_block < 0:
            raise ValueError(f"encoder layers_per_block {self.layers_per_block} out of range [0, inf)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"encoder dropout {self.dropout} out of range [0, 1)")
        return self

    @property
    def downsample(self) -> int:
        """Total stride: stem conv and stem pool, then one pool per transition."""
        return 4 * 2 ** (self.num_blocks - 1)


class DecoderConfig(BaseModel):
    """Transformer decoder parameters; the ICCM layer reuses them."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    layers: int = 3
    d_model: int = 256
    heads: int = 8
    ffn_dim: int = 1024
    dropout: float = 0.3
    arm_kernel: int = 5
    arm_channels: int = 32

    @model_validator(mode="after")
    def _check(self) -> DecoderConfig:
        if self.d_model % self.heads:
            raise ValueError(f"decoder d_model {self.d_model} not divisible by heads {self.heads}")
        if self.arm_kernel % 2 == 0:
            raise ValueError(f"decoder arm_kernel {self.arm_kernel} must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"decoder dropout {self.dropout} out of range [0, 1)")
        return self


class ModelConfig(BaseModel):
    """Full recognizer parameters.

    ``use_iccm=False`` builds the baseline (ARM decoder only, no ICCM, gate or
    implicit head).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "paper"
    encoder: EncoderConfig = EncoderConfig()
    decoder: DecoderConfig = DecoderConfig()
    use_iccm: bool = True
    max_len: int = 200

    @model_validator(mode="after")
    def _check(self) -> ModelConfig:
        if self.encoder.d_model != self.decoder.d_model:
            raise ValueError(
                f"encoder d_model {self.encoder.d_model} != decoder d_model {self.decoder.d_model}"
            )
        return self


BASE = ModelConfig()
TOY = ModelConfig(
    name="toy",
    encoder=EncoderConfig(num_blocks=2, layers_per_block=4, growth_rate=8, dropout=0.1, d_model=64),
    decoder=DecoderConfig(layers=2, d_model=64, heads=4, ffn_dim=256, dropout=0.1, arm_channels=8),
    max_len=64,
)
# "base" is kept as an alias of "paper"
PRESETS = {"paper": BASE, "base": BASE, "toy": TOY}


def get_preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}") from None
