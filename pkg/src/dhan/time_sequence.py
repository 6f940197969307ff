"""Time fusion and the time-aware Transformer block.

Per-news content/element/id vectors are concatenated with absolute and/or
relative time embeddings depending on the fusion mode; the Transformer
block carries no positional encoding, so click order can only enter
through the time embeddings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


class TimeFusionMode(enum.Enum):
    NONE = "none"
    RELATIVE = "relative"
    ABSOLUTE = "absolute"
    BOTH = "both"


def fused_dims(mode: TimeFusionMode, d: int) -> tuple[int, int]:
    """(per-step z dim, candidate z dim) for a fusion mode."""
    return {
        TimeFusionMode.NONE: (3 * d, 3 * d),
        TimeFusionMode.RELATIVE: (7 * d, 3 * d),
        TimeFusionMode.ABSOLUTE: (4 * d, 4 * d),
        TimeFusionMode.BOTH: (5 * d, 4 * d),
    }[mode]


@dataclass
class FusedSequence:
    z_seq: Tensor  # (..., L, dim_z)
    z_cand: Tensor  # (..., dim_z_cand)
    mode: TimeFusionMode


def fuse_time(
    x_prime_seq: Tensor,
    abs_emb: Tensor | None,
    rel_emb: Tensor | None,
    x_cand: Tensor,
    mode: TimeFusionMode,
) -> FusedSequence:
    """Concatenate content with time embeddings per fusion mode.

    x_prime_seq: (..., L, 3d); abs_emb: (..., L+1, d) (history rows 0..L-1,
    candidate row L); rel_emb: (..., L, d); x_cand: (..., 3d).
    """
    L = x_prime_seq.shape[-2]
    d3 = x_prime_seq.shape[-1]
    if d3 % 3:
        raise T.ShapeError(f"x' width must be 3d, got {d3}")
    if mode is TimeFusionMode.NONE:
        return FusedSequence(x_prime_seq, x_cand, mode)

    if mode is TimeFusionMode.RELATIVE:
        cand_rows = T.expand(
            T.reshape(x_cand, x_cand.shape[:-1] + (1, d3)),
            x_prime_seq.shape[:-2] + (L, d3),
        )
        z_seq = T.concat([x_prime_seq, rel_emb, cand_rows], axis=-1)
        return FusedSequence(z_seq, x_cand, mode)

    abs_hist = T.take(abs_emb, 0, L, axis=-2)
    abs_cand = T.reshape(
        T.take(abs_emb, L, L + 1, axis=-2),
        abs_emb.shape[:-2] + (abs_emb.shape[-1],),
    )
    z_cand = T.concat([x_cand, abs_cand], axis=-1)
    if mode is TimeFusionMode.ABSOLUTE:
        z_seq = T.concat([x_prime_seq, abs_hist], axis=-1)
    else:  # BOTH
        z_seq = T.concat([x_prime_seq, abs_hist, rel_emb], axis=-1)
    return FusedSequence(z_seq, z_cand, mode)


def time_aware_transform(fused: FusedSequence, u: Tensor, w_c: Tensor) -> Tensor:
    """Linear map of [z_i, z*, u] to d per sequence step: (..., L, d).

    u is (..., d); w_c must be (dim_z + dim_z_cand + d, d).
    """
    L = fused.z_seq.shape[-2]
    lead = fused.z_seq.shape[:-2]
    cand_rows = T.expand(
        T.reshape(fused.z_cand, fused.z_cand.shape[:-1] + (1, fused.z_cand.shape[-1])),
        lead + (L, fused.z_cand.shape[-1]),
    )
    u_rows = T.expand(T.reshape(u, u.shape[:-1] + (1, u.shape[-1])), lead + (L, u.shape[-1]))
    cat = T.concat([fused.z_seq, cand_rows, u_rows], axis=-1)
    if w_c.shape[0] != cat.shape[-1]:
        raise T.ShapeError(
            f"W_c expects input width {w_c.shape[0]}, fusion mode produced {cat.shape[-1]}"
        )
    return T.matmul(cat, w_c)


@dataclass
class TransformerParams:
    """One block's learned maps: attention projections, FFN, LayerNorm."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    w_a: Tensor  # (d, d')
    w_b: Tensor  # (d', d)
    ln_gamma: Tensor
    ln_beta: Tensor


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., L, d) -> (..., heads, L, d/h)."""
    lead = x.shape[:-2]
    L, d = x.shape[-2], x.shape[-1]
    x = T.reshape(x, lead + (L, heads, d // heads))
    return T.transpose(x, -3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    """(..., heads, L, d/h) -> (..., L, d)."""
    x = T.transpose(x, -3, -2)
    lead = x.shape[:-2]
    return T.reshape(x, lead + (x.shape[-2] * x.shape[-1],))


def transformer_block(
    t_seq: Tensor,
    params: TransformerParams,
    heads: int = 1,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Self-attention (no positional encoding) + position-wise FFN.

    Returns (output (..., L, d), attention weights (..., L, L)); with
    several heads the returned weights are the head average, still
    row-stochastic.
    """
    d = t_seq.shape[-1]
    if d % heads:
        raise T.ShapeError(f"d={d} not divisible by heads={heads}")
    q = T.matmul(t_seq, params.wq)
    k = T.matmul(t_seq, params.wk)
    v = T.matmul(t_seq, params.wv)
    if heads > 1:
        q, k, v = (_split_heads(x, heads) for x in (q, k, v))
    raw = T.mul(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d // heads))
    weights = T.softmax_rows(raw)
    attn = T.matmul(weights, v)
    if heads > 1:
        attn = _merge_heads(attn)
        trace_weights = T.mean(weights, axis=-3)
    else:
        trace_weights = weights
    x = T.relu(T.matmul(attn, params.w_a))
    x = T.matmul(x, params.w_b)
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training dropout requires an rng")
        x = T.dropout(x, dropout_rate, rng, training=True)
    out = T.layer_norm(T.add(x, attn), params.ln_gamma, params.ln_beta)
    return out, trace_weights
