"""Analytic parameter and FLOP counts.

Counting convention:

- one multiply-add is two FLOPs; convolutions, linear maps and both attention
  products are counted this way;
- element-wise work is counted per output element: ReLU 1, residual add 1, mask 1,
  batch norm (inference form) 2, layer norm 8, softmax 5, sigmoid gate 4, pooling
  one per window element;
- the workload is one encoder pass over the image plus one teacher-forced decoder
  pass per direction, each over ``seq_len`` positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ical.presets import IMPLICIT_CLASSES, DecoderConfig, EncoderConfig, ModelConfig

BASE_IMAGE = (1, 1, 120, 800)


def _ceil_half(n: int) -> int:
    return (n + 1) // 2


def _conv_out(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


@dataclass
class CostReport:
    params: dict[str, int] = field(default_factory=dict)
    flops: dict[str, float] = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return sum(self.params.values())

    @property
    def total_flops(self) -> float:
        return sum(self.flops.values())

    def as_text(self) -> str:
        lines = [f"params.{k}: {v}" for k, v in self.params.items()]
        lines.append(f"params.total: {self.total_params}")
        lines.append(f"params.total_m: {self.total_params / 1e6:.3f}")
        lines += [f"flops.{k}: {v:.0f}" for k, v in self.flops.items()]
        lines.append(f"flops.total_g: {self.total_flops / 1e9:.3f}")
        return "\n".join(lines) + "\n"


def encoder_params(config: EncoderConfig) -> int:
    """Closed-form parameter count of the DenseNet encoder."""
    g = config.growth_rate
    c = 2 * g
    total = 49 * c + 2 * c
    for block in range(config.num_blocks):
        for _ in range(config.layers_per_block):
            total += 2 * c + c * 4 * g + 2 * 4 * g + 4 * g * g * 9
            c += g
        if block < config.num_blocks - 1:
            total += 2 * c + c * (c // 2)
            c //= 2
    return total + 2 * c + c * config.d_model + config.d_model + 2 * config.d_model


def _attention_params(d: int) -> int:
    return 4 * (d * d + d)


def _ffn_params(d: int, hidden: int) -> int:
    return d * hidden + hidden + hidden * d + d


def decoder_params(config: DecoderConfig, vocab_size: int) -> int:
    d = config.d_model
    layer = 2 * _attention_params(d) + _ffn_params(d, config.ffn_dim) + 3 * 2 * d
    arm = config.arm_channels * config.arm_kernel**2 + config.arm_channels + config.arm_channels * config.heads
    return vocab_size * d + 2 * d + config.layers * layer + arm


def iccm_params(config: DecoderConfig) -> int:
    """ICCM, fusion gate and implicit head."""
    d = config.d_model
    iccm = _attention_params(d) + _ffn_params(d, config.ffn_dim) + 2 * 2 * d
    gate = 2 * d * d + d
    return iccm + gate + d * IMPLICIT_CLASSES + IMPLICIT_CLASSES


def parameter_breakdown(config: ModelConfig, vocab_size: int) -> dict[str, int]:
    d = config.decoder.d_model
    out = {
        "encoder": encoder_params(config.encoder),
        "decoder": decoder_params(config.decoder, vocab_size),
        "head": d * vocab_size + vocab_size,
    }
    if config.use_iccm:
        out["iccm"] = iccm_params(config.decoder)
    return out


def encoder_flops(config: EncoderConfig, height: int, width: int) -> float:
    g = config.growth_rate
    flops = 0.0
    h, w = _conv_out(height, 7, 2, 3), _conv_out(width, 7, 2, 3)
    c = 2 * g
    flops += 2 * h * w * c * 49 + 4 * h * w * c
    h, w = _conv_out(h, 3, 2, 1), _conv_out(w, 3, 2, 1)
    flops += 9 * h * w * c
    for block in range(config.num_blocks):
        n = h * w
        for _ in range(config.layers_per_block):
            flops += 4 * n * c + 2 * n * c * 4 * g
            flops += 4 * n * 4 * g + 2 * n * 4 * g * g * 9
            c += g
        if block < config.num_blocks - 1:
            flops += 4 * n * c + 2 * n * c * (c // 2)
            c //= 2
            flops += 4 * n * c
            h, w = _ceil_half(h), _ceil_half(w)
    n = h * w
    d = config.d_model
    return flops + 4 * n * c + 2 * n * c * d + 8 * n * d


def _attention_flops(d: int, heads: int, tq: int, tk: int) -> float:
    projections = 2 * (2 * tq * d * d) + 2 * (2 * tk * d * d)
    products = 2 * (2 * tq * tk * d)
    return projections + products + 5 * heads * tq * tk


def _ffn_flops(d: int, hidden: int, t: int) -> float:
    return 2 * 2 * t * d * hidden + t * hidden


def decoder_flops(config: DecoderConfig, vocab_size: int, seq_len: int, cells: int) -> float:
    """One teacher-forced pass of one sequence."""
    d, t = config.d_model, seq_len
    layer = _attention_flops(d, config.heads, t, t) + _attention_flops(d, config.heads, t, cells)
    layer += _ffn_flops(d, config.ffn_dim, t) + 3 * (8 * t * d + t * d)
    arm = 2 * t * cells * config.arm_channels * config.arm_kernel**2
    arm += t * cells * config.arm_channels + 2 * t * cells * config.arm_channels * config.heads
    arm += 2 * config.heads * t * cells
    return config.layers * (layer + arm) + 8 * t * d + 2 * t * d * vocab_size


def iccm_flops(config: DecoderConfig, vocab_size: int, seq_len: int) -> float:
    """ICCM, gate, implicit head and the second pass through the shared main head."""
    d, t = config.d_model, seq_len
    iccm = _attention_flops(d, config.heads, t, t) + _ffn_flops(d, config.ffn_dim, t) + 2 * (8 * t * d + t * d)
    gate = 2 * t * 2 * d * d + 4 * t * d + 3 * t * d
    return iccm + gate + 2 * t * d * IMPLICIT_CLASSES + 2 * t * d * vocab_size


def estimate_cost(
    config: ModelConfig,
    vocab_size: int,
    image_shape: tuple[int, int, int, int] = BASE_IMAGE,
    seq_len: int | None = None,
    directions: int = 2,
) -> CostReport:
    """Parameter and FLOP report for ``config`` on one ``image_shape`` input."""
    seq_len = config.max_len if seq_len is None else seq_len
    _, _, height, width = image_shape
    factor = config.encoder.downsample
    cells = math.ceil(height / factor) * math.ceil(width / factor)
    report = CostReport(params=parameter_breakdown(config, vocab_size))
    report.flops["encoder"] = encoder_flops(config.encoder, height, width)
    report.flops["decoder"] = directions * decoder_flops(config.decoder, vocab_size, seq_len, cells)
    if config.use_iccm:
        report.flops["iccm"] = directions * iccm_flops(config.decoder, vocab_size, seq_len)
    return report
