"""Single-head self-attention and cross-modal attention blocks."""
from __future__ import annotations

import numpy as np

from .. import numerics as nm
from ..errors import ConfigError

NEG_INF = -1e30


def init_self_attention(rng, d: int, prefix: str) -> dict:
    p = {}
    for name in ("wq", "wk", "wv", "wo"):
        p[prefix + name] = nm.glorot_uniform(rng, (d, d), d, d)
    p[prefix + "ln1.g"] = nm.ones_param((d,))
    p[prefix + "ln1.b"] = nm.zeros_param((d,))
    p[prefix + "ln2.g"] = nm.ones_param((d,))
    p[prefix + "ln2.b"] = nm.zeros_param((d,))
    p[prefix + "ff1.w"] = nm.glorot_uniform(rng, (d, 2 * d), d, 2 * d)
    p[prefix + "ff1.b"] = nm.zeros_param((2 * d,))
    p[prefix + "ff2.w"] = nm.glorot_uniform(rng, (2 * d, d), 2 * d, d)
    p[prefix + "ff2.b"] = nm.zeros_param((d,))
    return p


def apply_self_attention(x: nm.Tensor, params: dict, prefix: str,
                         key_mask: np.ndarray | None = None) -> nm.Tensor:
    """Pre-LN transformer layer; ``key_mask`` is 1 at attendable positions."""
    d = x.shape[-1]
    scale = 1.0 / np.sqrt(d)
    h = nm.layer_norm(x, params[prefix + "ln1.g"], params[prefix + "ln1.b"])
    q = nm.matmul(h, params[prefix + "wq"])
    k = nm.matmul(h, params[prefix + "wk"])
    v = nm.matmul(h, params[prefix + "wv"])
    scores = nm.scale(nm.matmul(q, nm.transpose(k)), scale)
    if key_mask is not None:
        scores = nm.add(scores, nm.Tensor(np.where(key_mask[None, :] > 0, 0.0, NEG_INF)))
    attn = nm.softmax_rows(scores)
    x = nm.add(x, nm.matmul(nm.matmul(attn, v), params[prefix + "wo"]))
    h = nm.layer_norm(x, params[prefix + "ln2.g"], params[prefix + "ln2.b"])
    h = nm.relu(nm.linear(h, params[prefix + "ff1.w"], params[prefix + "ff1.b"]))
    return nm.add(x, nm.linear(h, params[prefix + "ff2.w"], params[prefix + "ff2.b"]))


def init_cross_modal(rng, d: int, prefix: str) -> dict:
    p = {}
    p.update(init_self_attention(rng, d, prefix + "selfmap."))
    p.update(init_self_attention(rng, d, prefix + "selftext."))
    for name in ("wq", "wk", "wv"):
        p[prefix + name] = nm.glorot_uniform(rng, (d, d), d, d)
    return p


def cross_modal_attend(y: nm.Tensor, x: nm.Tensor, params: dict, prefix: str,
                       x_pad_mask: np.ndarray | None = None):
    """Map tokens attend over instruction tokens.

    Self-attention runs on each modality, then the map side queries the
    instruction side. Returns (H of shape (N, d), attention matrix (N, M) as
    a plain array for inspection).
    """
    if y.shape[-1] != x.shape[-1]:
        raise ConfigError(f"feature dims differ: map {y.shape} vs text {x.shape}")
    d = y.shape[-1]
    y = apply_self_attention(y, params, prefix + "selfmap.")
    x = apply_self_attention(x, params, prefix + "selftext.", key_mask=x_pad_mask)
    q = nm.matmul(y, params[prefix + "wq"])
    k = nm.matmul(x, params[prefix + "wk"])
    v = nm.matmul(x, params[prefix + "wv"])
    scores = nm.scale(nm.matmul(q, nm.transpose(k)), 1.0 / np.sqrt(d))
    if x_pad_mask is not None:
        scores = nm.add(scores, nm.Tensor(np.where(x_pad_mask[None, :] > 0, 0.0, NEG_INF)))
    attn = nm.softmax_rows(scores)
    h = nm.matmul(attn, v)
    return h, attn.data.copy()
