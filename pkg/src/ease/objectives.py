"""Loss terms and their weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor


@dataclass
class LossBundle:
    task: Tensor
    kl: Tensor
    lasso: Tensor
    bce: Tensor
    beta: float
    lasso_weight: float
    bce_weight: float
    total: Tensor

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in ("task", "kl", "lasso", "bce", "total")}


def _valid(x: Tensor, valid) -> np.ndarray:
    return np.ones(x.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)


def _per_row_mean(values: Tensor, weights: np.ndarray) -> Tensor:
    """sum(values * weights) / #rows, for (B, U) inputs; 1-D input is a single row."""
    rows = values.shape[0] if values.ndim == 2 else 1
    return dc.multiply(dc.sum(dc.multiply(values, weights)), 1.0 / rows)


def kl_sparsity(unit_probs, pi: float, valid=None) -> Tensor:
    """Sum over units of KL(Bernoulli(p_j) || Bernoulli(pi)); batched input averages over rows."""
    if not 0 < pi < 1:
        raise ValueError(f"pi must lie strictly inside (0, 1) for the Bernoulli prior, got {pi}")
    p = dc.as_tensor(unit_probs)
    q = dc.subtract(1.0, p)
    terms = dc.add(
        dc.multiply(p, dc.log(dc.multiply(p, 1.0 / pi))),
        dc.multiply(q, dc.log(dc.multiply(q, 1.0 / (1.0 - pi)))),
    )
    return _per_row_mean(terms, _valid(p, valid).astype(np.float64))


def lasso_loss(token_mask, valid=None) -> Tensor:
    """Sum of |m_i - m_{i+1}| over adjacent valid positions."""
    m = dc.as_tensor(token_mask)
    if m.shape[-1] < 1:
        raise ValueError("lasso_loss needs at least one position")
    if m.shape[-1] == 1:
        return Tensor(0.0)
    v = _valid(m, valid)
    pair = v[..., 1:] & v[..., :-1]
    diff = dc.abs(dc.subtract(dc.take(m, (Ellipsis, slice(1, None))), dc.take(m, (Ellipsis, slice(None, -1)))))
    return _per_row_mean(diff, pair.astype(np.float64))


def supervision_bce(unit_probs, oracle_labels, valid=None) -> Tensor:
    """Mean over units of binary cross-entropy against 0/1 labels; batched input averages over rows."""
    p = dc.as_tensor(unit_probs)
    labels = np.asarray(oracle_labels, dtype=np.float64)
    if labels.shape != p.shape:
        raise ValueError(f"labels shape {labels.shape} does not match probabilities {p.shape}")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    v = _valid(p, valid)
    counts = v.sum(axis=-1, keepdims=True).astype(np.float64)
    weights = np.where(v, 1.0, 0.0) / np.maximum(counts, 1.0)
    ce = dc.add(dc.multiply(dc.log(p), labels), dc.multiply(dc.log(dc.subtract(1.0, p)), 1.0 - labels))
    return dc.multiply(_per_row_mean(ce, weights), -1.0)


def combine(task, kl=0.0, lasso=0.0, bce=0.0, beta: float = 5.0, lasso_weight: float = 0.0,
            bce_weight: float = 0.0) -> LossBundle:
    """total = task + beta*kl + lasso_weight*lasso + bce_weight*bce; zero weights skip terms."""
    for name, w in (("beta", beta), ("lasso_weight", lasso_weight), ("bce_weight", bce_weight)):
        if w < 0:
            raise ValueError(f"{name} must be non-negative")
    task, kl, lasso, bce = (dc.as_tensor(t) for t in (task, kl, lasso, bce))
    total = task
    for w, term in ((beta, kl), (lasso_weight, lasso), (bce_weight, bce)):
        if w > 0:
            total = dc.add(total, dc.multiply(term, w))
    return LossBundle(task, kl, lasso, bce, beta, lasso_weight, bce_weight, total)
