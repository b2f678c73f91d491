"""Trained instruction encoder: embeddings + 2 masked self-attention layers.

Produces the M x d instruction feature matrix consumed as key/value by the
cross-modal attention blocks. Pad positions are masked out of attention and
their output rows zeroed.
"""
from __future__ import annotations

import numpy as np

from .. import numerics as nm
from ..errors import UsageError
from .vocab import MAX_TOKENS, PAD_ID, VOCAB_SIZE

NEG_INF = -1e30


def positional_encoding(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


def init_instruction_params(rng: np.random.Generator, d: int,
                            vocab_size: int = VOCAB_SIZE, n_layers: int = 2,
                            prefix: str = "instr.") -> dict[str, nm.Tensor]:
    ff = 2 * d
    p = {}
    p[prefix + "embed"] = nm.Tensor(rng.normal(0.0, 0.02, size=(vocab_size, d)),
                                    requires_grad=True)
    for l in range(n_layers):
        pre = f"{prefix}l{l}."
        for name in ("wq", "wk", "wv", "wo"):
            p[pre + name] = nm.glorot_uniform(rng, (d, d), d, d)
        p[pre + "ln1.g"] = nm.ones_param((d,))
        p[pre + "ln1.b"] = nm.zeros_param((d,))
        p[pre + "ln2.g"] = nm.ones_param((d,))
        p[pre + "ln2.b"] = nm.zeros_param((d,))
        p[pre + "ff1.w"] = nm.glorot_uniform(rng, (d, ff), d, ff)
        p[pre + "ff1.b"] = nm.zeros_param((ff,))
        p[pre + "ff2.w"] = nm.glorot_uniform(rng, (ff, d), ff, d)
        p[pre + "ff2.b"] = nm.zeros_param((d,))
    p[prefix + "final.w"] = nm.glorot_uniform(rng, (d, d), d, d)
    p[prefix + "final.b"] = nm.zeros_param((d,))
    return p


def encode_instruction(tokens, params: dict[str, nm.Tensor], d: int,
                       n_layers: int = 2, prefix: str = "instr.") -> nm.Tensor:
    """Token ids (length M) -> instruction features X of shape (M, d)."""
    ids = np.asarray(tokens, dtype=np.int64)
    table = params[prefix + "embed"]
    if ids.size and ids.max() >= table.shape[0]:
        raise UsageError(f"token id {ids.max()} >= vocabulary size {table.shape[0]}")
    m = ids.shape[0]
    real = (ids != PAD_ID).astype(np.float64)
    key_bias = nm.Tensor(np.where(real[None, :] > 0, 0.0, NEG_INF))

    x = nm.add(nm.embedding_lookup(table, ids), nm.Tensor(positional_encoding(m, d)))
    scale = 1.0 / np.sqrt(d)
    for l in range(n_layers):
        pre = f"{prefix}l{l}."
        h = nm.layer_norm(x, params[pre + "ln1.g"], params[pre + "ln1.b"])
        q = nm.matmul(h, params[pre + "wq"])
        k = nm.matmul(h, params[pre + "wk"])
        v = nm.matmul(h, params[pre + "wv"])
        scores = nm.add(nm.scale(nm.matmul(q, nm.transpose(k)), scale), key_bias)
        attn = nm.softmax_rows(scores)
        x = nm.add(x, nm.matmul(nm.matmul(attn, v), params[pre + "wo"]))
        h = nm.layer_norm(x, params[pre + "ln2.g"], params[pre + "ln2.b"])
        h = nm.relu(nm.linear(h, params[pre + "ff1.w"], params[pre + "ff1.b"]))
        x = nm.add(x, nm.linear(h, params[pre + "ff2.w"], params[pre + "ff2.b"]))
    x = nm.linear(x, params[prefix + "final.w"], params[prefix + "final.b"])
    return nm.mul(x, nm.Tensor(real[:, None]))


def pad_mask(tokens) -> np.ndarray:
    """1.0 at real-token positions, 0.0 at pads."""
    ids = np.asarray(tokens, dtype=np.int64)
    return (ids != PAD_ID).astype(np.float64)
