"""Reverse-mode differentiation on float64 numpy arrays.

The functional helpers below are thin wrappers over :func:`apply_primitive`.
"""

from __future__ import annotations

from .gradcheck import NonFiniteError, analytic_gradients, finite_difference_check
from .primitives import PRIMITIVES
from .rng import RngState, gumbel_from_uniform, gumbel_sample, permutation, uniform_open
from .tensor import DomainError, ShapeError, Tape, Tensor, active_tape, apply_primitive, as_tensor, backward


def matmul(a, b):
    return apply_primitive("matmul", (a, b))


def add(a, b):
    return apply_primitive("add", (a, b))


def subtract(a, b):
    return apply_primitive("subtract", (a, b))


def multiply(a, b):
    return apply_primitive("multiply", (a, b))


def divide(a, b):
    return apply_primitive("divide", (a, b))


def exp(x):
    return apply_primitive("exp", (x,))


def log(x):
    return apply_primitive("log", (x,))


def sigmoid(x):
    return apply_primitive("sigmoid", (x,))


def softmax(x):
    return apply_primitive("softmax-rows", (x,))


def log_softmax(x):
    return apply_primitive("log-softmax-rows", (x,))


def layer_norm(x, gain, bias, eps: float = 1e-5):
    return apply_primitive("layer-norm", (x, gain, bias), eps=eps)


def embedding(table, ids):
    return apply_primitive("embedding-lookup", (table,), ids=ids)


def concat(xs, axis: int = 0):
    return apply_primitive("concat", tuple(xs), axis=axis)


def take(x, key):
    return apply_primitive("slice", (x,), key=key)


def transpose(x, axes=None):
    return apply_primitive("transpose", (x,), axes=None if axes is None else tuple(axes))


def reshape(x, shape):
    return apply_primitive("reshape", (x,), shape=tuple(shape))


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001
    return apply_primitive("sum", (x,), axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims: bool = False):
    return apply_primitive("mean", (x,), axis=axis, keepdims=keepdims)


def abs(x):  # noqa: A001
    return apply_primitive("abs", (x,))


def power(x, exponent: float):
    return apply_primitive("power", (x,), exponent=float(exponent))


def where(cond, a, b):
    return apply_primitive("where-mask", (a, b), cond=cond)


__all__ = [
    "PRIMITIVES", "DomainError", "NonFiniteError", "RngState", "ShapeError", "Tape", "Tensor",
    "abs", "active_tape", "add", "analytic_gradients", "apply_primitive", "as_tensor",
    "backward", "concat", "divide", "embedding", "exp", "finite_difference_check",
    "gumbel_from_uniform", "gumbel_sample", "layer_norm", "log", "log_softmax", "matmul",
    "mean", "multiply", "permutation", "power", "reshape", "sigmoid", "softmax", "subtract",
    "sum", "take", "transpose", "uniform_open", "where",
]
