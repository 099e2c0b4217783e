"""Parameterized layers built on the autograd functions."""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Iterator
from typing import Any

import numpy as np

from ical.autograd import functional as F
from ical.autograd.random import derive_rng
from ical.autograd.tensor import Tensor, get_default_dtype
from ical.errors import CheckpointError


class Parameter(Tensor):
    """A leaf tensor that the optimizer updates."""

    def __init__(self, data: np.ndarray) -> None:
        super().__init__(np.asarray(data, dtype=get_default_dtype()), requires_grad=True)


class Module:
    """Container of parameters, buffers and child modules.

    Attributes assigned as ``Parameter`` or ``Module`` are registered by name, so
    ``named_parameters`` yields dotted names such as ``decoder.layers.0.ffn.0.weight``.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        self.register_buffer(name, value)

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError(type(self).__name__)

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for prefix, module in self.named_modules():
            for name, param in module._parameters.items():
                yield (f"{prefix}.{name}" if prefix else name), param

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for prefix, module in self.named_modules():
            for name, buffer in module._buffers.items():
                yield (f"{prefix}.{name}" if prefix else name), buffer

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> Module:
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def astype(self, dtype: Any) -> Module:
        """Casts every parameter and floating buffer in place."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, module in self.named_modules():
            for name, buffer in list(module._buffers.items()):
                if np.issubdtype(buffer.dtype, np.floating):
                    module.set_buffer(name, buffer.astype(dtype))
        return self

    def state_dict(self) -> OrderedDict[str, np.ndarray]:
        state: OrderedDict[str, np.ndarray] = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data
        for name, buffer in self.named_buffers():
            state[name] = buffer
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copies arrays from ``state`` into this module.

        Raises:
            CheckpointError: on missing or unexpected names and on shape mismatch.
        """
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        params = dict(self.named_parameters())
        for prefix, module in self.named_modules():
            for name in list(module._buffers):
                key = f"{prefix}.{name}" if prefix else name
                module.set_buffer(name, self._checked(key, own[key], state[key]))
        for key, p in params.items():
            p.data = self._checked(key, p.data, state[key])

    @staticmethod
    def _checked(key: str, current: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        if current.shape != incoming.shape:
            raise CheckpointError(f"{key}: shape {incoming.shape} != expected {current.shape}")
        return np.array(incoming, dtype=current.dtype)

    def reseed_dropout(self, root: int, *names: str | int) -> None:
        """Gives every dropout layer a fresh stream derived from its dotted name."""
        for name, module in self.named_modules():
            if isinstance(module, Dropout):
                module.rng = derive_rng(root, "dropout", name, *names)


class ModuleList(Module):
    def __init__(self, modules: list[Module]) -> None:
        super().__init__()
        self._items: list[Module] = []
        for i, module in enumerate(modules):
            setattr(self, str(i), module)
            self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Module:
        return self._items[i]


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def kaiming_normal(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Linear(Module):
    """``y = x @ W + b`` with ``W`` stored as ``(in_features, out_features)``."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(xavier_uniform(rng, in_features, out_features, (in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
    ) -> None:
        super().__init__()
        self.stride, self.padding = stride, padding
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_normal(rng, fan_in, shape))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = F.conv2d(x, self.weight, stride=self.stride, padding=self.padding)
        if self.bias is not None:
            out = out + self.bias.reshape(1, -1, 1, 1)
        return out


class BatchNorm2d(Module):
    """Batch normalization over valid pixels only.

    In training mode the per-channel statistics are taken over the positions where
    ``mask`` is True and folded into running averages; in eval mode the running
    averages are used.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        super().__init__()
        self.momentum, self.eps = momentum, eps
        dtype = get_default_dtype()
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        m = mask[:, None, :, :].astype(x.dtype)
        if self.training:
            count = max(float(m.sum()), 1.0)
            weights = Tensor(m / count)
            mean = (x * weights).sum(axis=(0, 2, 3), keepdims=True)
            centered = x - mean
            var = (centered * centered * weights).sum(axis=(0, 2, 3), keepdims=True)
            self.set_buffer(
                "running_mean",
                ((1 - self.momentum) * self.running_mean + self.momentum * mean.data.reshape(-1)).astype(x.dtype),
            )
            self.set_buffer(
                "running_var",
                ((1 - self.momentum) * self.running_var + self.momentum * var.data.reshape(-1)).astype(x.dtype),
            )
            normed = centered / F.sqrt(var + self.eps)
        else:
            mean = Tensor(self.running_mean.reshape(1, -1, 1, 1).astype(x.dtype))
            std = np.sqrt(self.running_var.reshape(1, -1, 1, 1) + self.eps).astype(x.dtype)
            normed = (x - mean) / Tensor(std)
        return normed * self.weight.reshape(1, -1, 1, 1) + self.bias.reshape(1, -1, 1, 1)


class LayerNorm(Module):
    def __init__(self, features: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / F.sqrt(var + self.eps) * self.weight + self.bias


class Embedding(Module):
    def __init__(self, num_embeddings: int, features: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.weight = Parameter(xavier_uniform(rng, num_embeddings, features, (num_embeddings, features)))

    def forward(self, ids: np.ndarray) -> Tensor:
        return self.weight[np.asarray(ids)]


class Dropout(Module):
    """Inverted dropout with its own seeded stream."""

    def __init__(self, p: float, rng: np.random.Generator) -> None:
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.rng, self.training)
