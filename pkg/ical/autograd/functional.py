"""Differentiable operations.

Each operation is a ``Function`` subclass with a thin wrapper function. Wrappers
are what the rest of the package calls; the classes only matter to the tape.
"""

from __future__ import annotations

from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ical.autograd.tensor import Function, Tensor
from ical.errors import MaskError, ShapeError


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.unbroadcast(grad * self.b, self.a.shape),
            self.unbroadcast(grad * self.a, self.b.shape),
        )


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a / b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.unbroadcast(grad / self.b, self.a.shape),
            self.unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape),
        )


class Neg(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (-grad,)


class Power(Function):
    def forward(self, a: np.ndarray, exponent: float) -> np.ndarray:
        self.a, self.exponent = a, exponent
        return a**exponent

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * self.exponent * self.a ** (self.exponent - 1),)


class Exp(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.out = np.exp(a)
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * self.out,)


class Log(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.a = a
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad / self.a,)


class Relu(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.positive = a > 0
        return np.where(self.positive, a, 0).astype(a.dtype, copy=False)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * self.positive,)


class Sigmoid(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.out = 0.5 * (1.0 + np.tanh(0.5 * a))
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * self.out * (1.0 - self.out),)


class Sum(Function):
    def forward(
        self, a: np.ndarray, axis: int | tuple[int, ...] | None, keepdims: bool
    ) -> np.ndarray:
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a: np.ndarray, axes: tuple[int, ...] | None) -> np.ndarray:
        self.axes = axes if axes is not None else tuple(reversed(range(a.ndim)))
        return np.transpose(a, self.axes)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    def forward(self, a: np.ndarray, index: Any) -> np.ndarray:
        self.shape, self.dtype, self.index = a.shape, a.dtype, index
        return np.array(a[index])

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Pad(Function):
    def forward(self, a: np.ndarray, widths: tuple[tuple[int, int], ...]) -> np.ndarray:
        self.crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
        return np.pad(a, widths)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad[self.crop],)


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError(f"matmul batch dimensions mismatch: {a.shape} @ {b.shape}") from None
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = grad @ np.swapaxes(self.b, -1, -2)
        grad_b = np.swapaxes(self.a, -1, -2) @ grad
        return self.unbroadcast(grad_a, self.a.shape), self.unbroadcast(grad_b, self.b.shape)


class Softmax(Function):
    def forward(self, a: np.ndarray, axis: int, mask: np.ndarray | None) -> np.ndarray:
        self.axis = axis
        if mask is None:
            shifted = a - a.max(axis=axis, keepdims=True)
            e = np.exp(shifted)
        else:
            mask = np.broadcast_to(mask, a.shape)
            if not mask.any(axis=axis).all():
                raise MaskError(f"softmax over axis {axis} has a fully masked slice")
            peak = np.where(mask, a, -np.inf).max(axis=axis, keepdims=True)
            e = np.exp(np.where(mask, a - peak, 0.0)) * mask
        self.out = (e / e.sum(axis=axis, keepdims=True)).astype(a.dtype, copy=False)
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        inner = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


class LogSoftmax(Function):
    def forward(self, a: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        shifted = a - a.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.probs = np.exp(out)
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad - self.probs * grad.sum(axis=self.axis, keepdims=True),)


class Cumsum(Function):
    def forward(self, a: np.ndarray, axis: int, exclusive: bool) -> np.ndarray:
        self.axis, self.exclusive = axis, exclusive
        out = np.cumsum(a, axis=axis)
        return out - a if exclusive else out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        rev = np.flip(np.cumsum(np.flip(grad, self.axis), axis=self.axis), self.axis)
        return (rev - grad if self.exclusive else rev,)


class Conv2d(Function):
    def forward(self, x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {w.shape}")
        if stride < 1 or padding < 0:
            raise ShapeError(f"conv2d stride {stride} / padding {padding} out of range")
        kh, kw = w.shape[2:]
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        if kh > xp.shape[2] or kw > xp.shape[3]:
            raise ShapeError(f"conv2d kernel {w.shape[2:]} larger than padded input {xp.shape[2:]}")
        self.windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        self.x_shape, self.w, self.stride, self.padding = x.shape, w, stride, padding
        out = np.tensordot(self.windows, w, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s, p = self.stride, self.padding
        kh, kw = self.w.shape[2:]
        n, c, h, w = self.x_shape
        ho, wo = grad.shape[2:]
        grad_w = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))
        cols = np.tensordot(grad, self.w, axes=([1], [0]))  # n, ho, wo, c, kh, kw
        grad_xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += cols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        return grad_xp[:, :, p : p + h, p : p + w], grad_w


class MaxPool2d(Function):
    def forward(self, x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
        self.x_shape, self.kernel, self.stride, self.padding = x.shape, kernel, stride, padding
        xp = np.pad(
            x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf
        )
        windows = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
        flat = windows.reshape(*windows.shape[:4], kernel * kernel)
        self.argmax = flat.argmax(axis=-1)
        return np.take_along_axis(flat, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        n, c, h, w = self.x_shape
        p, s, k = self.padding, self.stride, self.kernel
        ho, wo = grad.shape[2:]
        di, dj = np.divmod(self.argmax, k)
        rows = np.arange(ho)[None, None, :, None] * s + di
        cols = np.arange(wo)[None, None, None, :] * s + dj
        nn = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        grad_xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        np.add.at(grad_xp, (nn, cc, rows, cols), grad)
        return (grad_xp[:, :, p : p + h, p : p + w],)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def div(a: Tensor, b: Tensor) -> Tensor:
    return Div.apply(a, b)


def neg(a: Tensor) -> Tensor:
    return Neg.apply(a)


def power(a: Tensor, exponent: float) -> Tensor:
    return Power.apply(a, exponent=exponent)


def sqrt(a: Tensor) -> Tensor:
    return Power.apply(a, exponent=0.5)


def exp(a: Tensor) -> Tensor:
    return Exp.apply(a)


def log(a: Tensor) -> Tensor:
    return Log.apply(a)


def relu(a: Tensor) -> Tensor:
    return Relu.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


def sum(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return Sum.apply(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Reshape.apply(a, shape=shape)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    return Transpose.apply(a, axes=axes)


def getitem(a: Tensor, index: Any) -> Tensor:
    return GetItem.apply(a, index=index)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def pad(a: Tensor, widths: tuple[tuple[int, int], ...]) -> Tensor:
    return Pad.apply(a, widths=widths)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product ``a[.., m, k] @ b[.., k, n]``.

    Raises:
        ShapeError: when the inner extents differ or batch extents do not broadcast.
    """
    return MatMul.apply(a, b)


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False come out exactly 0.

    Raises:
        MaskError: when a slice along ``axis`` has no unmasked entry.
    """
    return Softmax.apply(a, axis=axis, mask=mask)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(a, axis=axis)


def cumsum(a: Tensor, axis: int, exclusive: bool = False) -> Tensor:
    return Cumsum.apply(a, axis=axis, exclusive=exclusive)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of ``x[b, c, h, w]`` with ``kernel[o, c, kh, kw]``.

    Output extents are ``(in + 2 * padding - k) // stride + 1``.

    Raises:
        ShapeError: on channel mismatch or a kernel larger than the padded input.
    """
    return Conv2d.apply(x, kernel, stride=stride, padding=padding)


def max_pool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    return MaxPool2d.apply(x, kernel=kernel, stride=stride, padding=padding)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scales kept units by ``1 / (1 - p)`` at train time."""
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * Tensor(keep)
