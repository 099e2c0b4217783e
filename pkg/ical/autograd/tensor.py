"""Tensor and gradient tape.

A ``Tensor`` wraps a numpy array. Operations on tensors are ``Function``
subclasses; applying one records the function as the output's creator, so the
creators reachable from a loss form the tape that ``backward`` replays in reverse
topological order.
"""

from __future__ import annotations

import threading
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np

from ical.errors import ContractError, NumericError

_state = threading.local()


def get_default_dtype() -> np.dtype:
    return np.dtype(getattr(_state, "dtype", np.float32))


@contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    """Sets the floating dtype of newly created parameters and constants."""
    previous = get_default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disables tape recording in the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def check_finite(array: np.ndarray, where: str) -> None:
    if not np.isfinite(array).all():
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NumericError(f"{where} produced {bad} non-finite value(s)")


class Function:
    """Base class of differentiable operations.

    Subclasses implement ``forward`` on raw arrays and ``backward``, which maps the
    gradient of the output to one gradient (or ``None``) per parent tensor.
    """

    def __init__(self, *parents: Tensor) -> None:
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError(f"{type(self).__name__}.backward")

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        check_finite(out, cls.__name__)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, _ctx=fn if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        """Sums ``grad`` over the axes numpy broadcasting added to reach its shape."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class GradTape:
    """Ordered record of the operations between a root tensor and its leaves.

    ``nodes`` holds every tensor on a path to the root that requires a gradient, in
    topological order (inputs before outputs). ``run`` visits them in reverse order,
    each exactly once, and accumulates into the ``grad`` buffer of every leaf.
    """

    def __init__(self, root: Tensor) -> None:
        self.root = root
        self.nodes = self._topological_order(root)

    @staticmethod
    def _topological_order(root: Tensor) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in seen:
                        stack.append((parent, False))
        return order

    def run(self, seed: np.ndarray) -> None:
        pending: dict[int, np.ndarray] = {id(self.root): seed}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad


class Tensor:
    """Dense floating-point array with optional gradient tracking.

    Args:
        data: array-like content; integer input is cast to the default dtype.
        requires_grad: whether ``backward`` should produce a gradient for it.
    """

    __array_priority__ = 1000

    def __init__(
        self,
        data: np.ndarray | float | int | Sequence[Any],
        requires_grad: bool = False,
        _ctx: Function | None = None,
    ) -> None:
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(get_default_dtype())
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._ctx = _ctx

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulates d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf.

        Gradients add onto whatever the leaves already hold: a second call without
        resetting them doubles the stored values.

        Raises:
            ContractError: if this tensor is not a scalar.
        """
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        GradTape(self).run(np.ones_like(self.data))

    def _lift(self, other: Any) -> Tensor:
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.add(self, self._lift(other))

    def __radd__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.add(self._lift(other), self)

    def __sub__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.sub(self, self._lift(other))

    def __rsub__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.sub(self._lift(other), self)

    def __mul__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.mul(self, self._lift(other))

    def __rmul__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.mul(self._lift(other), self)

    def __truediv__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.div(self, self._lift(other))

    def __rtruediv__(self, other: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.div(self._lift(other), self)

    def __neg__(self) -> Tensor:
        from ical.autograd import functional as F

        return F.neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from ical.autograd import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        from ical.autograd import functional as F

        return F.getitem(self, index)

    def __pow__(self, exponent: float) -> Tensor:
        from ical.autograd import functional as F

        return F.power(self, exponent)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        from ical.autograd import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        from ical.autograd import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        from ical.autograd import functional as F

        if len(shape) == 1 and isinstance(shape[0], tuple | list):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        from ical.autograd import functional as F

        return F.transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> Tensor:
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def exp(self) -> Tensor:
        from ical.autograd import functional as F

        return F.exp(self)

    def log(self) -> Tensor:
        from ical.autograd import functional as F

        return F.log(self)

    def relu(self) -> Tensor:
        from ical.autograd import functional as F

        return F.relu(self)

    def sigmoid(self) -> Tensor:
        from ical.autograd import functional as F

        return F.sigmoid(self)
