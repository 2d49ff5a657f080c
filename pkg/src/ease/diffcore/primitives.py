"""Forward and backward rules for every primitive kind.

Each rule works on raw float64 arrays. ``forward`` returns ``(out, ctx)``;
``backward`` receives the output gradient and returns one gradient (or
``None``) per input.
"""

from __future__ import annotations

import numpy as np

from .tensor import DomainError, ShapeError

LOG_FLOOR = 1e-12


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_ok(*shapes) -> None:
    try:
        np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"shapes {' and '.join(map(str, shapes))} do not broadcast") from None


class Primitive:
    kind = ""
    arity: int | None = 1

    def check(self, xs, attrs) -> None:
        if self.arity is not None and len(xs) != self.arity:
            raise ShapeError(f"{self.kind} takes {self.arity} inputs, got {len(xs)}")

    def forward(self, xs, attrs):
        raise NotImplementedError

    def backward(self, g, ctx, xs, out, attrs):
        raise NotImplementedError


class _Elementwise(Primitive):
    arity = 2

    def check(self, xs, attrs):
        super().check(xs, attrs)
        _broadcast_ok(xs[0].shape, xs[1].shape)


class Add(_Elementwise):
    kind = "add"

    def forward(self, xs, attrs):
        return xs[0] + xs[1], None

    def backward(self, g, ctx, xs, out, attrs):
        return _unbroadcast(g, xs[0].shape), _unbroadcast(g, xs[1].shape)


class Subtract(_Elementwise):
    kind = "subtract"

    def forward(self, xs, attrs):
        return xs[0] - xs[1], None

    def backward(self, g, ctx, xs, out, attrs):
        return _unbroadcast(g, xs[0].shape), _unbroadcast(-g, xs[1].shape)


class Multiply(_Elementwise):
    kind = "multiply"

    def forward(self, xs, attrs):
        return xs[0] * xs[1], None

    def backward(self, g, ctx, xs, out, attrs):
        a, b = xs
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


class Divide(_Elementwise):
    kind = "divide"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        if np.any(xs[1] == 0):
            raise DomainError("divide: zero divisor")

    def forward(self, xs, attrs):
        return xs[0] / xs[1], None

    def backward(self, g, ctx, xs, out, attrs):
        a, b = xs
        return _unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape)


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # numpy's stacked matmul is much slower on strided views
    if a.ndim > 2 and not a.flags.c_contiguous:
        a = np.ascontiguousarray(a)
    if b.ndim > 2 and not b.flags.c_contiguous:
        b = np.ascontiguousarray(b)
    return a @ b


class MatMul(Primitive):
    kind = "matmul"
    arity = 2

    def check(self, xs, attrs):
        super().check(xs, attrs)
        a, b = xs
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
        _broadcast_ok(a.shape[:-2], b.shape[:-2])

    def forward(self, xs, attrs):
        return _mm(xs[0], xs[1]), None

    def backward(self, g, ctx, xs, out, attrs):
        a, b = xs
        ga = _mm(g, np.swapaxes(b, -1, -2))
        if b.ndim == 2 and a.ndim > 2:
            # weight matrix shared across leading dims: fold them into rows
            gb = _mm(a.reshape(-1, a.shape[-1]).T, g.reshape(-1, g.shape[-1]))
        else:
            gb = _mm(np.swapaxes(a, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


class Exp(Primitive):
    kind = "exp"

    def forward(self, xs, attrs):
        return np.exp(xs[0]), None

    def backward(self, g, ctx, xs, out, attrs):
        return (g * out,)


class Log(Primitive):
    """Natural log; non-positive inputs are rejected, tiny positive ones clamped."""

    kind = "log"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        if np.any(xs[0] <= 0):
            raise DomainError("log: non-positive operand")

    def forward(self, xs, attrs):
        x = xs[0]
        clamped = x < LOG_FLOOR
        return np.log(np.where(clamped, LOG_FLOOR, x)), clamped

    def backward(self, g, ctx, xs, out, attrs):
        return (np.where(ctx, 0.0, g / xs[0]),)


class Sigmoid(Primitive):
    kind = "sigmoid"

    def forward(self, xs, attrs):
        # tanh form never overflows
        out = np.tanh(xs[0] * 0.5)
        out += 1.0
        out *= 0.5
        return out, None

    def backward(self, g, ctx, xs, out, attrs):
        return (g * out * (1.0 - out),)


class SoftmaxRows(Primitive):
    kind = "softmax-rows"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        if xs[0].ndim < 1:
            raise ShapeError("softmax-rows: needs at least one axis")

    def forward(self, xs, attrs):
        x = xs[0]
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True), None

    def backward(self, g, ctx, xs, out, attrs):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


class LogSoftmaxRows(Primitive):
    kind = "log-softmax-rows"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        if xs[0].ndim < 1:
            raise ShapeError("log-softmax-rows: needs at least one axis")

    def forward(self, xs, attrs):
        x = xs[0]
        shifted = x - x.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True)), None

    def backward(self, g, ctx, xs, out, attrs):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)


class LayerNorm(Primitive):
    """Normalise over the last axis, then scale and shift: inputs (x, gain, bias)."""

    kind = "layer-norm"
    arity = 3

    def check(self, xs, attrs):
        super().check(xs, attrs)
        x, gain, bias = xs
        d = x.shape[-1:]
        if gain.shape != d or bias.shape != d:
            raise ShapeError(f"layer-norm: gain {gain.shape} / bias {bias.shape} must be {d}")

    def forward(self, xs, attrs):
        x, gain, bias = xs
        eps = attrs.get("eps", 1e-5)
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
        xhat = xc * inv
        return xhat * gain + bias, (xhat, inv)

    def backward(self, g, ctx, xs, out, attrs):
        x, gain, _ = xs
        xhat, inv = ctx
        lead = tuple(range(x.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gx_hat = g * gain
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias


class EmbeddingLookup(Primitive):
    """Rows of a table selected by integer ``ids`` (static attribute)."""

    kind = "embedding-lookup"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        table = xs[0]
        ids = np.asarray(attrs["ids"])
        if table.ndim != 2:
            raise ShapeError(f"embedding-lookup: table must be 2-D, got {table.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise ShapeError(f"embedding-lookup: ids outside [0, {table.shape[0]})")

    def forward(self, xs, attrs):
        return xs[0][np.asarray(attrs["ids"])], None

    def backward(self, g, ctx, xs, out, attrs):
        gt = np.zeros_like(xs[0])
        np.add.at(gt, np.asarray(attrs["ids"]).reshape(-1), g.reshape(-1, xs[0].shape[1]))
        return (gt,)


class Concat(Primitive):
    kind = "concat"
    arity = None

    def check(self, xs, attrs):
        axis = attrs.get("axis", 0)
        if not xs:
            raise ShapeError("concat: no inputs")
        ref = list(xs[0].shape)
        for x in xs[1:]:
            s = list(x.shape)
            if len(s) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(s, ref)) if i != axis % len(ref)):
                raise ShapeError(f"concat: shapes {tuple(ref)} and {tuple(s)} differ off axis {axis}")

    def forward(self, xs, attrs):
        axis = attrs.get("axis", 0)
        return np.concatenate(xs, axis=axis), [x.shape[axis] for x in xs]

    def backward(self, g, ctx, xs, out, attrs):
        splits = np.cumsum(ctx)[:-1]
        return tuple(np.split(g, splits, axis=attrs.get("axis", 0)))


def _is_basic(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(p is None or p is Ellipsis or isinstance(p, (slice, int, np.integer)) for p in parts)


class Slice(Primitive):
    """``x[key]`` for any numpy index expression (basic or advanced)."""

    kind = "slice"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        try:
            xs[0][attrs["key"]]
        except IndexError as exc:
            raise ShapeError(f"slice: {exc} for shape {xs[0].shape}") from None

    def forward(self, xs, attrs):
        return xs[0][attrs["key"]], None

    def backward(self, g, ctx, xs, out, attrs):
        key = attrs["key"]
        gx = np.zeros_like(xs[0])
        if _is_basic(key):
            gx[key] = g
        else:
            np.add.at(gx, key, g)
        return (gx,)


class Transpose(Primitive):
    kind = "transpose"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        axes = attrs.get("axes")
        if axes is not None and sorted(axes) != list(range(xs[0].ndim)):
            raise ShapeError(f"transpose: axes {axes} invalid for shape {xs[0].shape}")

    def forward(self, xs, attrs):
        return np.transpose(xs[0], attrs.get("axes")), None

    def backward(self, g, ctx, xs, out, attrs):
        axes = attrs.get("axes")
        return (np.transpose(g, None if axes is None else np.argsort(axes)),)


class Reshape(Primitive):
    kind = "reshape"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        try:
            np.empty(xs[0].shape, dtype=np.bool_).reshape(attrs["shape"])
        except ValueError:
            raise ShapeError(f"reshape: cannot view {xs[0].shape} as {attrs['shape']}") from None

    def forward(self, xs, attrs):
        return xs[0].reshape(attrs["shape"]), None

    def backward(self, g, ctx, xs, out, attrs):
        return (g.reshape(xs[0].shape),)


class Sum(Primitive):
    kind = "sum"

    def forward(self, xs, attrs):
        return xs[0].sum(axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False)), None

    def backward(self, g, ctx, xs, out, attrs):
        axis = attrs.get("axis")
        if axis is not None and not attrs.get("keepdims", False):
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xs[0].shape).copy(),)


class Mean(Primitive):
    kind = "mean"

    def forward(self, xs, attrs):
        return xs[0].mean(axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False)), None

    def backward(self, g, ctx, xs, out, attrs):
        axis = attrs.get("axis")
        x = xs[0]
        count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
        if axis is not None and not attrs.get("keepdims", False):
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)


class Abs(Primitive):
    kind = "abs"

    def forward(self, xs, attrs):
        return np.abs(xs[0]), None

    def backward(self, g, ctx, xs, out, attrs):
        return (g * np.sign(xs[0]),)


class Power(Primitive):
    kind = "power"

    def check(self, xs, attrs):
        super().check(xs, attrs)
        p = attrs["exponent"]
        if p != int(p) and np.any(xs[0] < 0):
            raise DomainError("power: negative base with fractional exponent")
        if p < 0 and np.any(xs[0] == 0):
            raise DomainError("power: zero base with negative exponent")

    def forward(self, xs, attrs):
        return np.power(xs[0], attrs["exponent"]), None

    def backward(self, g, ctx, xs, out, attrs):
        p = attrs["exponent"]
        return (g * p * np.power(xs[0], p - 1),)


class WhereMask(Primitive):
    """``where(cond, a, b)`` with a static boolean ``cond``."""

    kind = "where-mask"
    arity = 2

    def check(self, xs, attrs):
        super().check(xs, attrs)
        _broadcast_ok(np.shape(attrs["cond"]), xs[0].shape, xs[1].shape)

    def forward(self, xs, attrs):
        return np.where(attrs["cond"], xs[0], xs[1]), None

    def backward(self, g, ctx, xs, out, attrs):
        cond = attrs["cond"]
        return (_unbroadcast(np.where(cond, g, 0.0), xs[0].shape),
                _unbroadcast(np.where(cond, 0.0, g), xs[1].shape))


PRIMITIVES: dict[str, Primitive] = {
    p.kind: p
    for p in (
        MatMul(), Add(), Multiply(), Subtract(), Divide(), Exp(), Log(), Sigmoid(),
        SoftmaxRows(), LogSoftmaxRows(), LayerNorm(), EmbeddingLookup(), Concat(),
        Slice(), Transpose(), Reshape(), Sum(), Mean(), Abs(), Power(), WhereMask(),
    )
}
