"""Central-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


class NonFiniteError(FloatingPointError):
    pass


def _as_named(params) -> dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    if isinstance(params, Tensor):
        return {"p0": params}
    return {f"p{i}": t for i, t in enumerate(params)}


def analytic_gradients(fn: Callable[[], Tensor], params) -> dict[str, np.ndarray]:
    named = _as_named(params)
    for t in named.values():
        t.requires_grad = True
    with Tape():
        loss = fn()
    return backward(loss, named)


def finite_difference_check(
    fn: Callable[[], Tensor],
    params,
    epsilon: float = 1e-5,
    coords: Mapping[str, Sequence[int]] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` is called with no arguments and must read the current values of
    ``params`` (perturbed in place). ``coords`` optionally restricts which
    flat indices are probed per parameter.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    named = _as_named(params)
    analytic = analytic_gradients(fn, named)
    worst = 0.0
    for name, t in named.items():
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        idx = range(flat.size) if coords is None or name not in coords else coords[name]
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = float(fn().data)
            flat[i] = orig - epsilon
            fm = float(fn().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError(f"non-finite function value perturbing {name}[{i}]")
            num = (fp - fm) / (2 * epsilon)
            a = float(ga[i])
            denom = max(abs(a), abs(num), 1e-8)
            worst = max(worst, abs(a - num) / denom)
    return worst
