"""Dense tensors with reverse-mode differentiation on top of numpy."""

from ical.autograd import functional
from ical.autograd.nn import Module, Parameter
from ical.autograd.random import derive_rng
from ical.autograd.tensor import (
    Function,
    GradTape,
    Tensor,
    default_dtype,
    get_default_dtype,
    no_grad,
)

__all__ = [
    "Function",
    "GradTape",
    "Module",
    "Parameter",
    "Tensor",
    "default_dtype",
    "derive_rng",
    "functional",
    "get_default_dtype",
    "no_grad",
]
