"""Pre-LN transformer blocks over diffcore tensors.

Parameters live in a flat ``{name: Tensor}`` map; every function here takes
that map plus a name prefix.
"""

from __future__ import annotations

import math
import zlib

import numpy as np

from . import diffcore as dc

NEG_INF = -1e30


# ---------------------------------------------------------------------------
# parameter shapes and initialisation


def _linear_shapes(prefix, d_in, d_out, out_scale=1.0):
    return {
        f"{prefix}.w": ((d_in, d_out), ("normal", out_scale / math.sqrt(d_in))),
        f"{prefix}.b": ((d_out,), ("zeros",)),
    }


def _ln_shapes(prefix, d):
    return {f"{prefix}.g": ((d,), ("ones",)), f"{prefix}.b": ((d,), ("zeros",))}


def _attn_shapes(prefix, d, fused_qkv, out_scale):
    shapes = {}
    if fused_qkv:
        shapes.update(_linear_shapes(f"{prefix}.qkv", d, 3 * d))
    else:
        shapes.update(_linear_shapes(f"{prefix}.q", d, d))
        shapes.update(_linear_shapes(f"{prefix}.kv", d, 2 * d))
    shapes.update(_linear_shapes(f"{prefix}.o", d, d, out_scale))
    return shapes


def _ffn_shapes(prefix, d, f, out_scale):
    return {**_linear_shapes(f"{prefix}.w1", d, f), **_linear_shapes(f"{prefix}.w2", f, d, out_scale)}


def embedding_shapes(prefix, vocab_size, d, max_positions, with_tokens=True):
    s = 1 / math.sqrt(d)
    shapes = {
        f"{prefix}.pos_emb": ((max_positions, d), ("normal", s)),
        f"{prefix}.seg_emb": ((2, d), ("normal", s)),
    }
    if with_tokens:
        shapes[f"{prefix}.tok_emb"] = ((vocab_size, d), ("normal", s))
    return shapes


def encoder_shapes(prefix, num_layers, d, ffn_dim):
    out_scale = 1 / math.sqrt(2 * num_layers)
    shapes = {}
    for l in range(num_layers):
        p = f"{prefix}.layer{l}"
        shapes.update(_ln_shapes(f"{p}.ln1", d))
        shapes.update(_attn_shapes(f"{p}.attn", d, True, out_scale))
        shapes.update(_ln_shapes(f"{p}.ln2", d))
        shapes.update(_ffn_shapes(f"{p}.ffn", d, ffn_dim, out_scale))
    shapes.update(_ln_shapes(f"{prefix}.ln_f", d))
    return shapes


def decoder_shapes(prefix, num_layers, d, ffn_dim):
    out_scale = 1 / math.sqrt(3 * num_layers)
    shapes = {}
    for l in range(num_layers):
        p = f"{prefix}.layer{l}"
        shapes.update(_ln_shapes(f"{p}.ln1", d))
        shapes.update(_attn_shapes(f"{p}.self", d, True, out_scale))
        shapes.update(_ln_shapes(f"{p}.ln2", d))
        shapes.update(_attn_shapes(f"{p}.cross", d, False, out_scale))
        shapes.update(_ln_shapes(f"{p}.ln3", d))
        shapes.update(_ffn_shapes(f"{p}.ffn", d, ffn_dim, out_scale))
    shapes.update(_ln_shapes(f"{prefix}.ln_f", d))
    return shapes


def init_tensor(name: str, shape, init, seed: int) -> np.ndarray:
    """Draws depend only on (seed, name), never on creation order."""
    kind = init[0]
    if kind == "zeros":
        return np.zeros(shape)
    if kind == "ones":
        return np.ones(shape)
    if kind == "const":
        return np.full(shape, float(init[1]))
    if kind == "normal":
        key = (seed & ((1 << 64) - 1)) | (zlib.crc32(name.encode()) << 64)
        gen = np.random.Generator(np.random.Philox(key=key))
        return gen.standard_normal(shape) * init[1]
    raise ValueError(f"unknown initialiser {init!r}")


# ---------------------------------------------------------------------------
# forward blocks


def linear(P, prefix, x):
    return dc.add(dc.matmul(x, P[f"{prefix}.w"]), P[f"{prefix}.b"])


def layer_norm(P, prefix, x):
    return dc.layer_norm(x, P[f"{prefix}.g"], P[f"{prefix}.b"])


def _split_heads(x, B, T, parts, H, dh):
    # (B, T, parts*d) -> (parts, B, H, T, dh)
    x = dc.reshape(x, (B, T, parts, H, dh))
    return dc.transpose(x, (2, 0, 3, 1, 4))


def _merge_heads(x, B, T, d):
    # (B, H, T, dh) -> (B, T, d)
    return dc.reshape(dc.transpose(x, (0, 2, 1, 3)), (B, T, d))


def _attend(q, k, v, bias_terms, dh):
    scores = dc.matmul(q, dc.transpose(k, (0, 1, 3, 2)))
    for b in bias_terms:
        if b is not None:
            scores = dc.add(scores, b)
    return dc.matmul(dc.softmax(scores), v)


def self_attention(P, prefix, x, num_heads, bias_terms=()):
    B, T, d = x.shape
    dh = d // num_heads
    qkv = _split_heads(linear(P, f"{prefix}.qkv", x), B, T, 3, num_heads, dh)
    q = dc.multiply(dc.take(qkv, 0), 1.0 / math.sqrt(dh))
    ctx = _attend(q, dc.take(qkv, 1), dc.take(qkv, 2), bias_terms, dh)
    return linear(P, f"{prefix}.o", _merge_heads(ctx, B, T, d))


def cross_attention(P, prefix, x, memory, num_heads, bias_terms=()):
    B, T, d = x.shape
    S = memory.shape[1]
    dh = d // num_heads
    q = dc.take(_split_heads(linear(P, f"{prefix}.q", x), B, T, 1, num_heads, dh), 0)
    q = dc.multiply(q, 1.0 / math.sqrt(dh))
    kv = _split_heads(linear(P, f"{prefix}.kv", memory), B, S, 2, num_heads, dh)
    ctx = _attend(q, dc.take(kv, 0), dc.take(kv, 1), bias_terms, dh)
    return linear(P, f"{prefix}.o", _merge_heads(ctx, B, T, d))


def feed_forward(P, prefix, x):
    h = linear(P, f"{prefix}.w1", x)
    h = dc.multiply(h, dc.sigmoid(h))
    return linear(P, f"{prefix}.w2", h)


def embed_inputs(P, prefix, tok, positions, segment_ids=None):
    """Token embeddings (already looked up, possibly masked) plus position/segment."""
    x = dc.add(tok, dc.embedding(P[f"{prefix}.pos_emb"], positions))
    if segment_ids is not None:
        x = dc.add(x, dc.embedding(P[f"{prefix}.seg_emb"], segment_ids))
    return x


def run_encoder(P, prefix, x, num_layers, num_heads, bias_terms=()):
    for l in range(num_layers):
        p = f"{prefix}.layer{l}"
        x = dc.add(x, self_attention(P, f"{p}.attn", layer_norm(P, f"{p}.ln1", x), num_heads, bias_terms))
        x = dc.add(x, feed_forward(P, f"{p}.ffn", layer_norm(P, f"{p}.ln2", x)))
    return layer_norm(P, f"{prefix}.ln_f", x)


def run_decoder(P, prefix, y, memory, num_layers, num_heads, self_bias, memory_bias_terms=()):
    for l in range(num_layers):
        p = f"{prefix}.layer{l}"
        y = dc.add(y, self_attention(P, f"{p}.self", layer_norm(P, f"{p}.ln1", y), num_heads, (self_bias,)))
        y = dc.add(y, cross_attention(P, f"{p}.cross", layer_norm(P, f"{p}.ln2", y), memory, num_heads,
                                      memory_bias_terms))
        y = dc.add(y, feed_forward(P, f"{p}.ffn", layer_norm(P, f"{p}.ln3", y)))
    return layer_norm(P, f"{prefix}.ln_f", y)


def causal_bias(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), NEG_INF), k=1)[None, None]


def key_block_bias(blocked: np.ndarray) -> np.ndarray:
    """(B, S) boolean -> additive (B, 1, 1, S) bias that removes blocked keys."""
    return np.where(blocked, NEG_INF, 0.0)[:, None, None, :]
