"""Sentence-level self-attention over [user; sentences; candidate].

The stacked (K+2, d) block attends to itself with scaled dot-product
weights; padded sentences are masked out of every softmax row. All
functions accept leading batch dims, e.g. (B, L, K+2, d).
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

MASK_LOGIT = -1e9


def stack_block(u: Tensor, sent_matrix: Tensor, cand_vec: Tensor) -> Tensor:
    """[u; s_1..s_K; c*] along the row axis: (..., K+2, d)."""
    return T.concat([u, sent_matrix, cand_vec], axis=-2)


def column_mask(pad_mask: np.ndarray) -> np.ndarray:
    """(-1e9 on padded columns) additive mask, shaped (..., 1, K+2).

    pad_mask marks the K sentence rows; the u and c* columns are never
    masked.
    """
    pad_mask = np.asarray(pad_mask, dtype=bool)
    lead = pad_mask.shape[:-1]
    full = np.concatenate(
        [
            np.ones(lead + (1,), dtype=bool),
            pad_mask,
            np.ones(lead + (1,), dtype=bool),
        ],
        axis=-1,
    )
    return np.where(full, 0.0, MASK_LOGIT)[..., None, :]


def sentence_attend(
    u: Tensor,
    sent_matrix: Tensor,
    cand_vec: Tensor,
    pad_mask: np.ndarray,
    w1: Tensor,
    w2: Tensor,
    w3: Tensor,
) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention over the stacked block.

    Returns (attended (..., K+2, d), weights (..., K+2, K+2)); weight rows
    are stochastic and padded columns carry zero weight.
    """
    d = w1.shape[-1]
    s = stack_block(u, sent_matrix, cand_vec)
    raw = T.matmul(T.matmul(s, w1), T.matmul(w2, T.transpose(s)))
    raw = T.mul(raw, 1.0 / math.sqrt(d))
    raw = T.add(raw, Tensor(column_mask(pad_mask)))
    beta = T.softmax_rows(raw)
    attended = T.matmul(beta, T.matmul(s, w3))
    return attended, beta


def pool_news_content(attended: Tensor, pad_mask: np.ndarray) -> Tensor:
    """Mean over unmasked rows (u and c* rows always included): (..., d)."""
    pad_mask = np.asarray(pad_mask, dtype=bool)
    lead = pad_mask.shape[:-1]
    keep = np.concatenate(
        [
            np.ones(lead + (1,), dtype=bool),
            pad_mask,
            np.ones(lead + (1,), dtype=bool),
        ],
        axis=-1,
    ).astype(np.float64)
    weights = keep / keep.sum(axis=-1, keepdims=True)
    pooled = T.matmul(Tensor(weights[..., None, :]), attended)
    return T.reshape(pooled, pooled.shape[:-2] + (pooled.shape[-1],))
