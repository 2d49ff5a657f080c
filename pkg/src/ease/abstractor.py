"""Seq2seq abstractor that re-encodes the masked source and decodes a summary."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import diffcore as dc
from . import layers
from .corpus import BOS_ID, EOS_ID, PAD_ID, Batch
from .diffcore import Tensor
from .extractor import as_batch

if TYPE_CHECKING:
    from .model import ModelParameters

SCHEMES = ("embed-mix", "attention-block")
ATTN_EPS = 1e-9


@dataclass
class AbstractorConfig:
    num_layers: int = 2
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 256
    mask_scheme: str = "embed-mix"
    share_encoder: bool = False

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError("model_dim must be divisible by num_heads")
        if self.mask_scheme not in SCHEMES:
            raise ValueError(f"mask_scheme must be one of {SCHEMES}")


@dataclass
class Seq2SeqState:
    memory: Tensor                 # (B, S, d) encoder outputs of the masked source
    memory_bias: tuple             # additive key biases for cross-attention


def apply_mask_embedding(token_embeddings: Tensor, token_mask, mask_embedding: Tensor) -> Tensor:
    """Per position: m * x + (1 - m) * x_mask."""
    m = token_mask if isinstance(token_mask, Tensor) else Tensor(token_mask)
    if m.shape != token_embeddings.shape[:-1]:
        raise ValueError(f"mask shape {m.shape} does not match sequence shape {token_embeddings.shape[:-1]}")
    m3 = dc.reshape(m, m.shape + (1,))
    return dc.add(dc.multiply(m3, token_embeddings), dc.multiply(dc.subtract(1.0, m3), mask_embedding))


def apply_mask_attention(token_mask) -> Tensor:
    """Additive key bias log((m + eps) / (1 + eps)): exactly 0 at m = 1, about -20.7 at m = 0."""
    m = token_mask if isinstance(token_mask, Tensor) else Tensor(token_mask)
    return dc.log(dc.multiply(dc.add(m, ATTN_EPS), 1.0 / (1.0 + ATTN_EPS)))


def _mask_values(token_mask) -> np.ndarray:
    return token_mask.data if isinstance(token_mask, Tensor) else np.asarray(token_mask, dtype=np.float64)


def encode_source(params: "ModelParameters", batch: Batch, token_mask=None, scheme: str | None = None) -> Seq2SeqState:
    """Encode the masked source from token ids; extractor activations are never reused.

    ``token_mask=None`` runs the plain seq2seq encoder with no mask machinery.
    Under ``attention-block``, positions whose mask is exactly 0 are removed
    from every softmax.
    """
    cfg = params.abstractor
    scheme = scheme or cfg.mask_scheme
    if scheme not in SCHEMES:
        raise ValueError(f"unknown mask scheme {scheme!r}")
    P = params.tensors
    prefix = params.encoder_prefix
    B, S = batch.source.shape
    if S > cfg.max_positions:
        raise ValueError(f"source length {S} exceeds max_positions {cfg.max_positions}")
    tok = dc.embedding(P[f"{prefix}.tok_emb"], batch.source)
    blocked = ~batch.src_valid
    soft_bias = None
    if token_mask is not None:
        if _mask_values(token_mask).shape != (B, S):
            raise ValueError(f"mask shape {_mask_values(token_mask).shape} != source shape {(B, S)}")
        if scheme == "embed-mix":
            tok = apply_mask_embedding(tok, token_mask, P["abs.x_mask"])
        else:
            blocked = blocked | (_mask_values(token_mask) == 0.0)
            soft_bias = dc.reshape(apply_mask_attention(token_mask), (B, 1, 1, S))
    seg = batch.segment_ids if batch.level == "sentence" else None
    x = layers.embed_inputs(P, prefix, tok, np.arange(S), seg)
    bias_terms = (layers.key_block_bias(blocked), soft_bias)
    memory = layers.run_encoder(P, prefix, x, cfg.num_layers, cfg.num_heads, bias_terms)
    return Seq2SeqState(memory, bias_terms)


def decode_logits(params: "ModelParameters", state: Seq2SeqState, target_in: np.ndarray) -> Tensor:
    cfg = params.abstractor
    P = params.tensors
    B, T = target_in.shape
    if T > cfg.max_positions:
        raise ValueError(f"target length {T} exceeds max_positions {cfg.max_positions}")
    emb = P[f"{params.encoder_prefix}.tok_emb"]
    y = layers.embed_inputs(P, "abs.dec", dc.embedding(emb, target_in), np.arange(T))
    h = layers.run_decoder(P, "abs.dec", y, state.memory, cfg.num_layers, cfg.num_heads,
                           layers.causal_bias(T), state.memory_bias)
    return dc.add(dc.matmul(h, dc.transpose(emb, (1, 0))), P["abs.out_bias"])


def forward_nll(params: "ModelParameters", encoded, token_mask=None, scheme: str | None = None) -> Tensor:
    """Teacher-forced NLL: per-token mean within each example, averaged over the batch."""
    batch = as_batch(encoded)
    if batch.target_in is None:
        raise ValueError("forward_nll needs target ids")
    state = encode_source(params, batch, token_mask, scheme)
    logp = dc.log_softmax(decode_logits(params, state, batch.target_in))
    return target_nll(logp, batch)


def target_nll(logp: Tensor, batch: Batch) -> Tensor:
    b_idx, t_idx = np.nonzero(batch.tgt_valid)
    picked = dc.take(logp, (b_idx, t_idx, batch.target_out[b_idx, t_idx]))
    lengths = batch.tgt_valid.sum(axis=1)
    weights = 1.0 / (lengths[b_idx] * batch.size)
    return dc.multiply(dc.sum(dc.multiply(picked, weights)), -1.0)


def generate(params: "ModelParameters", encoded, token_mask=None, scheme: str | None = None,
             max_len: int = 64, beam: int = 1) -> list[list[int]]:
    """Greedy (beam=1) or length-normalised beam decoding; output excludes BOS."""
    if beam < 1:
        raise ValueError("beam must be at least 1")
    batch = as_batch(encoded)
    max_len = min(max_len, params.abstractor.max_positions)
    if beam == 1:
        return _greedy(params, batch, token_mask, scheme, max_len)
    mask = None if token_mask is None else _mask_values(token_mask)
    outs = []
    for b in range(batch.size):
        sub = _select(batch, b)
        outs.append(_beam_one(params, sub, None if mask is None else mask[b : b + 1, : sub.source.shape[1]],
                              scheme, max_len, beam))
    return outs


def _select(batch: Batch, b: int) -> Batch:
    from .corpus import collate

    return collate([batch.examples[b]])


def _greedy(params, batch, token_mask, scheme, max_len):
    state = encode_source(params, batch, token_mask, scheme)
    B = batch.size
    ys = np.full((B, 1), BOS_ID, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    out: list[list[int]] = [[] for _ in range(B)]
    for _ in range(max_len):
        logits = decode_logits(params, state, ys).data[:, -1]
        nxt = logits.argmax(axis=-1)
        for b in range(B):
            if not done[b]:
                out[b].append(int(nxt[b]))
        done |= nxt == EOS_ID
        if done.all():
            break
        ys = np.concatenate([ys, np.where(done, PAD_ID, nxt)[:, None]], axis=1)
    return out


def _beam_one(params, batch, token_mask, scheme, max_len, beam):
    state = encode_source(params, batch, token_mask, scheme)
    beams = [([BOS_ID], 0.0)]
    finished: list[tuple[list[int], float]] = []
    for _ in range(max_len):
        ys = np.array([seq for seq, _ in beams], dtype=np.int64)
        k = len(beams)
        st = Seq2SeqState(
            Tensor(np.repeat(state.memory.data, k, axis=0)),
            tuple(None if b is None else np.repeat(_mask_values(b), k, axis=0) for b in state.memory_bias),
        )
        logp = dc.log_softmax(decode_logits(params, st, ys)).data[:, -1]
        cands = []
        for i, (seq, score) in enumerate(beams):
            top = np.argsort(-logp[i], kind="stable")[:beam]
            cands.extend((score + float(logp[i, t]), i, int(t)) for t in top)
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        beams = []
        for score, i, t in cands:
            seq = ys[i].tolist() + [t]
            if t == EOS_ID:
                finished.append((seq[1:], score))
            else:
                beams.append((seq, score))
            if len(beams) == beam:
                break
        if len(finished) >= beam or not beams:
            break
    if not finished:
        finished = [(seq[1:], score) for seq, score in beams]
    best = max(finished, key=lambda f: f[1] / max(len(f[0]), 1))
    return best[0]


def nll_per_example(params, encoded, token_mask=None, scheme=None) -> np.ndarray:
    """Per-example mean token NLL without recording a tape."""
    batch = as_batch(encoded)
    state = encode_source(params, batch, token_mask, scheme)
    logp = dc.log_softmax(decode_logits(params, state, batch.target_in)).data
    picked = np.take_along_axis(logp, batch.target_out[..., None], axis=-1)[..., 0]
    picked = np.where(batch.tgt_valid, picked, 0.0)
    return -picked.sum(axis=1) / batch.tgt_valid.sum(axis=1)


def uniform_nll(vocab_size: int) -> float:
    return math.log(vocab_size)
