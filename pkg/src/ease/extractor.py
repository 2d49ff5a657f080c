"""Unit scoring and soft/hard mask construction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

from . import diffcore as dc
from . import layers
from .corpus import LEVELS, Batch, EncodedExample, collate
from .diffcore import RngState, Tensor, gumbel_sample

if TYPE_CHECKING:
    from .model import ModelParameters

PROB_EPS = 1e-6
SOFT_EPS = 1e-12


@dataclass
class ExtractorConfig:
    num_layers: int = 2
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 256
    level: str = "sentence"
    tau: float = 0.01
    sparsity_pi: float = 0.5
    min_sentences: int = 3
    init_prob: float = 0.0          # starting selection probability; 0 means sparsity_pi

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError("model_dim must be divisible by num_heads")
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 < self.sparsity_pi <= 1:
            raise ValueError("sparsity_pi must lie in (0, 1]")
        if not 0 <= self.init_prob < 1:
            raise ValueError("init_prob must lie in [0, 1)")
        if self.min_sentences < 1:
            raise ValueError("min_sentences must be at least 1")


@dataclass
class MaskDistribution:
    """Per-unit selection probabilities for a batch; padded units are invalid."""

    unit_probs: Tensor              # (B, U)
    unit_valid: np.ndarray          # (B, U)
    level: str
    unit_of_token: np.ndarray       # (B, S) owning unit of each position
    src_valid: np.ndarray           # (B, S)
    encoder_states: Tensor | None = None

    def probs(self, b: int = 0) -> np.ndarray:
        return self.unit_probs.data[b][self.unit_valid[b]]

    @property
    def num_units(self) -> np.ndarray:
        return self.unit_valid.sum(axis=1)


@dataclass
class SoftMask:
    units: Tensor   # (B, U)
    token: Tensor   # (B, S)


@dataclass
class HardMask:
    units: np.ndarray   # (B, U) in {0, 1}
    token: np.ndarray   # (B, S) in {0, 1}

    @property
    def num_selected(self) -> np.ndarray:
        return self.units.sum(axis=1).astype(int)


def as_batch(encoded: Batch | EncodedExample | list) -> Batch:
    if isinstance(encoded, Batch):
        return encoded
    if isinstance(encoded, EncodedExample):
        return collate([encoded])
    return collate(list(encoded))


def score_units(params: "ModelParameters", encoded) -> MaskDistribution:
    """Encode the unmasked source and map each unit to a probability.

    Token level scores every position; sentence level scores the CLS
    representation of each sentence.
    """
    cfg = params.extractor
    batch = as_batch(encoded)
    if batch.level != cfg.level:
        raise ValueError(f"encoded level {batch.level!r} does not match extractor level {cfg.level!r}")
    S = batch.source.shape[1]
    if S > cfg.max_positions:
        raise ValueError(f"source length {S} exceeds max_positions {cfg.max_positions}")
    P = params.tensors
    tok = dc.embedding(P["ext.tok_emb"], batch.source)
    seg = batch.segment_ids if cfg.level == "sentence" else None
    x = layers.embed_inputs(P, "ext", tok, np.arange(S), seg)
    blocked = layers.key_block_bias(~batch.src_valid)
    h = layers.run_encoder(P, "ext", x, cfg.num_layers, cfg.num_heads, (blocked,))
    B = batch.size
    reps = dc.take(h, (np.arange(B)[:, None], batch.units))          # (B, U, d)
    logits = dc.reshape(layers.linear(P, "ext.head", reps), reps.shape[:2])
    probs = dc.sigmoid(logits)
    probs = clamp_probs(probs)
    return MaskDistribution(probs, batch.unit_valid, cfg.level, batch.unit_to_token(), batch.src_valid, h)


def clamp_probs(p: Tensor, eps: float = PROB_EPS) -> Tensor:
    p = dc.where(p.data >= eps, p, eps)
    return dc.where(p.data <= 1 - eps, p, 1 - eps)


def gather_units(units, unit_of_token: np.ndarray):
    """Per-unit values -> per-token values (differentiable for Tensors)."""
    B = unit_of_token.shape[0]
    key = (np.arange(B)[:, None], unit_of_token)
    if isinstance(units, Tensor):
        return dc.take(units, key)
    return np.asarray(units)[key]


def relaxed_bernoulli(p1: Tensor, gumbel: np.ndarray, tau: float) -> Tensor:
    """Two-class Gumbel-softmax weight of the 'select' class.

    ``gumbel[..., 0]`` perturbs the drop class, ``gumbel[..., 1]`` the select
    class.
    """
    p0 = dc.subtract(1.0, p1)
    s1 = dc.add(dc.log(p1), gumbel[..., 1])
    s0 = dc.add(dc.log(p0), gumbel[..., 0])
    shape = p1.shape + (1,)
    scores = dc.concat([dc.reshape(s0, shape), dc.reshape(s1, shape)], axis=-1)
    weights = dc.softmax(dc.multiply(scores, 1.0 / tau))
    z = dc.take(weights, (Ellipsis, 1))
    z = dc.where(z.data >= SOFT_EPS, z, SOFT_EPS)
    return dc.where(z.data <= 1 - SOFT_EPS, z, 1 - SOFT_EPS)


def soft_mask(dist: MaskDistribution, rng: RngState, tau: float, gumbel: np.ndarray | None = None) -> SoftMask:
    """Differentiable mask sample; sentence values are broadcast to their tokens."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if gumbel is None:
        gumbel = gumbel_sample(dist.unit_probs.shape + (2,), rng).data
    z = relaxed_bernoulli(dist.unit_probs, gumbel, tau)
    return SoftMask(z, gather_units(z, dist.unit_of_token))


def selection_size(pi: float, n_units: int, floor: int) -> int:
    """max(ceil(pi * n), floor), capped at n; pi is read as its decimal value."""
    want = math.ceil(Fraction(str(pi)) * n_units) if isinstance(pi, float) else math.ceil(pi * n_units)
    return min(max(want, floor), n_units)


def topk_units(probs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest probabilities; earlier position wins ties."""
    order = np.argsort(-np.asarray(probs), kind="stable")
    return np.sort(order[:k])


def hard_mask_topk(dist: MaskDistribution, pi: float, min_sentences: int = 3) -> HardMask:
    if not 0 < pi <= 1:
        raise ValueError("pi must lie in (0, 1]")
    floor = min_sentences if dist.level == "sentence" else 1
    units = np.zeros(dist.unit_valid.shape)
    for b in range(units.shape[0]):
        p = dist.probs(b)
        units[b, topk_units(p, selection_size(pi, len(p), floor))] = 1.0
    return HardMask(units, fixed_token_mask(units, dist))


def fixed_token_mask(units: np.ndarray, dist: MaskDistribution) -> np.ndarray:
    token = gather_units(units, dist.unit_of_token)
    return np.where(dist.src_valid, token, 0.0)


def mask_from_units(dist: MaskDistribution, selected: list) -> HardMask:
    """Hard mask selecting the given unit indices per example."""
    units = np.zeros(dist.unit_valid.shape)
    for b, idx in enumerate(selected):
        units[b, list(idx)] = 1.0
    return HardMask(units, fixed_token_mask(units, dist))


def broadcast_sentence_mask(sentence_mask, sentence_ids):
    """Token j receives ``sentence_mask[sentence_ids[j]]``."""
    ids = np.asarray(sentence_ids, dtype=np.int64)
    n = sentence_mask.shape[-1] if isinstance(sentence_mask, Tensor) else len(sentence_mask)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"sentence id {int(ids.max())} out of range for {n} sentences")
    if isinstance(sentence_mask, Tensor):
        return dc.take(sentence_mask, ids)
    return np.asarray(sentence_mask, dtype=np.float64)[ids]
