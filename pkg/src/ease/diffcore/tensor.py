"""Tensor, tape and the reverse sweep."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when a primitive receives incompatible input shapes."""


class DomainError(ValueError):
    """Raised when a primitive is evaluated outside its domain."""


class Tensor:
    """A float64 array that optionally takes part in reverse-mode differentiation.

    Leaves created by the user carry ``requires_grad``; results of primitives
    applied under an active :class:`Tape` inherit it when any input has it.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # operator sugar; every operator routes through apply_primitive
    def __add__(self, other):
        return apply_primitive("add", (self, other))

    def __radd__(self, other):
        return apply_primitive("add", (other, self))

    def __sub__(self, other):
        return apply_primitive("subtract", (self, other))

    def __rsub__(self, other):
        return apply_primitive("subtract", (other, self))

    def __mul__(self, other):
        return apply_primitive("multiply", (self, other))

    def __rmul__(self, other):
        return apply_primitive("multiply", (other, self))

    def __truediv__(self, other):
        return apply_primitive("divide", (self, other))

    def __rtruediv__(self, other):
        return apply_primitive("divide", (other, self))

    def __matmul__(self, other):
        return apply_primitive("matmul", (self, other))

    def __neg__(self):
        return apply_primitive("multiply", (self, -1.0))

    def __pow__(self, exponent):
        return apply_primitive("power", (self,), exponent=float(exponent))

    def __getitem__(self, key):
        return apply_primitive("slice", (self,), key=key)

    @property
    def T(self):
        axes = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        return apply_primitive("transpose", (self,), axes=axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    prim: Any
    inputs: tuple[Tensor, ...]
    output: Tensor
    ctx: Any
    attrs: dict


@dataclass
class Tape:
    """Ordered record of primitive applications.

    Nodes are appended in execution order, which is a topological order of
    the computation by construction.
    """

    nodes: list[Node] = field(default_factory=list)

    def record(self, node: Node) -> None:
        node.output._tape = self
        self.nodes.append(node)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.nodes)


_local = threading.local()


def _stack() -> list[Tape]:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def active_tape() -> Tape | None:
    st = _stack()
    return st[-1] if st else None


def apply_primitive(kind: str, inputs: Sequence, **attrs) -> Tensor:
    """Evaluate primitive ``kind`` on ``inputs``; record it when a tape is active."""
    from .primitives import PRIMITIVES

    try:
        prim = PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}") from None
    tensors = tuple(as_tensor(x) for x in inputs)
    prim.check([t.data for t in tensors], attrs)
    out, ctx = prim.forward([t.data for t in tensors], attrs)
    result = Tensor(out)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in tensors):
        result.requires_grad = True
        tape.record(Node(prim, tensors, result, ctx, attrs))
    return result


def backward(loss: Tensor, params: Mapping[str, Tensor] | None = None) -> dict[str, np.ndarray]:
    """Propagate d(loss)/d(.) back through the tape that produced ``loss``.

    Leaf gradients are stored on ``.grad``. The returned map covers ``params``
    when given (unreached parameters get zeros), else every named leaf reached.
    """
    if loss.data.size != 1 or loss.ndim not in (0, 1):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    tape = loss._tape
    if tape is not None:
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.prim.backward(g, node.ctx, [t.data for t in node.inputs], node.output.data, node.attrs)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if inp._tape is None:
                    leaves[key] = inp
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
    elif loss.requires_grad:
        leaves[id(loss)] = loss

    for key, leaf in leaves.items():
        leaf.grad = grads[key]

    if params is not None:
        return {
            name: (grads[id(t)] if id(t) in leaves else np.zeros_like(t.data))
            for name, t in params.items()
        }
    return {leaf.name: grads[key] for key, leaf in leaves.items() if leaf.name is not None}
