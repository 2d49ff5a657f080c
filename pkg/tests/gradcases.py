"""Finite-difference cases shared by the unit and acceptance suites."""

import numpy as np

from ease import diffcore as dc
from ease.diffcore import Tensor


def projected(fn, shape_seed=0):
    """Wrap fn so that the scalar loss is a fixed random projection of its output."""
    cache = {}

    def loss():
        out = fn()
        if "r" not in cache:
            cache["r"] = np.random.default_rng(shape_seed).normal(size=out.shape)
        return dc.sum(dc.multiply(out, cache["r"]))

    return loss


def _rand(rng, *shape, low=None):
    x = rng.normal(size=shape)
    if low is not None:
        x = np.abs(x) + low
    return Tensor(x, requires_grad=True)


CASES = {
    "add": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 4)), lambda: dc.add(a, b)),
    "subtract": lambda r: ((a := _rand(r, 2, 3)), (b := _rand(r, 2, 1)), lambda: dc.subtract(a, b)),
    "multiply": lambda r: ((a := _rand(r, 2, 3, 4)), (b := _rand(r, 3, 1)), lambda: dc.multiply(a, b)),
    "divide": lambda r: ((a := _rand(r, 3, 2)), (b := _rand(r, 3, 2, low=0.5)), lambda: dc.divide(a, b)),
    "matmul": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 4, 2)), lambda: dc.matmul(a, b)),
    "matmul-batched": lambda r: ((a := _rand(r, 2, 3, 3, 4)), (b := _rand(r, 2, 3, 4, 2)), lambda: dc.matmul(a, b)),
    "matmul-shared": lambda r: ((a := _rand(r, 2, 3, 4)), (b := _rand(r, 4, 5)), lambda: dc.matmul(a, b)),
    "exp": lambda r: ((a := _rand(r, 5)), None, lambda: dc.exp(a)),
    "log": lambda r: ((a := _rand(r, 2, 3, low=0.2)), None, lambda: dc.log(a)),
    "sigmoid": lambda r: ((a := _rand(r, 4, 3)), None, lambda: dc.sigmoid(a)),
    "softmax": lambda r: ((a := _rand(r, 3, 5)), None, lambda: dc.softmax(a)),
    "log-softmax": lambda r: ((a := _rand(r, 2, 2, 4)), None, lambda: dc.log_softmax(a)),
    "layer-norm": lambda r: ((a := _rand(r, 3, 6)), (g := _rand(r, 6)),
                             lambda: dc.layer_norm(a, g, Tensor(np.linspace(-1, 1, 6)))),
    "embedding": lambda r: ((a := _rand(r, 5, 3)), None, lambda: dc.embedding(a, np.array([[0, 4, 4], [2, 0, 1]]))),
    "concat": lambda r: ((a := _rand(r, 2, 3)), (b := _rand(r, 2, 2)), lambda: dc.concat([a, b], axis=-1)),
    "slice": lambda r: ((a := _rand(r, 4, 5)), None, lambda: dc.take(a, (slice(1, 3), slice(None, None, 2)))),
    "gather": lambda r: ((a := _rand(r, 4, 5)), None, lambda: dc.take(a, (np.array([0, 0, 3]), np.array([1, 1, 4])))),
    "transpose": lambda r: ((a := _rand(r, 2, 3, 4)), None, lambda: dc.transpose(a, (2, 0, 1))),
    "reshape": lambda r: ((a := _rand(r, 2, 6)), None, lambda: dc.reshape(a, (3, 4))),
    "sum": lambda r: ((a := _rand(r, 3, 4)), None, lambda: dc.sum(a, axis=0)),
    "mean": lambda r: ((a := _rand(r, 3, 4)), None, lambda: dc.mean(a, axis=1, keepdims=True)),
    "abs": lambda r: ((a := Tensor(np.array([-1.5, -0.3, 0.7, 2.0]), requires_grad=True)), None, lambda: dc.abs(a)),
    "power": lambda r: ((a := _rand(r, 3, low=0.5)), None, lambda: dc.power(a, 2.5)),
    "where-mask": lambda r: ((a := _rand(r, 3, 3)), (b := _rand(r, 3, 3)),
                             lambda: dc.where(np.eye(3, dtype=bool), a, b)),
}


def check_case(kind: str) -> float:
    a, b, fn = CASES[kind](np.random.default_rng(7))
    params = [t for t in (a, b) if t is not None]
    return dc.finite_difference_check(projected(fn), params)
