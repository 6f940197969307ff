"""Element-level self-attention over the five paired (history, candidate)
element vectors: person, organization, time, location, keywords.

Missing elements are zero rows; all five slots are attended
unconditionally. Leading batch dims are supported, e.g. (B, L, 5, d).
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

ELEMENT_ORDER = ("person", "organization", "time", "location", "keywords")
N_ELEMENTS = len(ELEMENT_ORDER)


def element_attend(
    hist: Tensor,
    cand: Tensor,
    w4: Tensor,
    w5: Tensor,
    w6: Tensor,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Attention over [hist | cand] rows concatenated on the feature axis.

    hist and cand are (..., 5, d); w4-w6 are (2d, d). Returns
    (attended (..., 5, d), gamma (..., 5, 5)). Dropout applies to the
    attention probabilities, training mode only.
    """
    if hist.shape[-2] != N_ELEMENTS or cand.shape[-2] != N_ELEMENTS:
        raise T.ShapeError("element matrices must have 5 rows")
    d = w4.shape[-1]
    p = T.concat([hist, cand], axis=-1)
    q = T.matmul(p, w4)
    k = T.matmul(p, w5)
    v = T.matmul(p, w6)
    raw = T.mul(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d))
    gamma = T.softmax_rows(raw)
    weights = gamma
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training dropout requires an rng")
        weights = T.dropout(gamma, dropout_rate, rng, training=True)
    attended = T.matmul(weights, v)
    return attended, gamma


def pool_elements(attended: Tensor) -> Tensor:
    """Mean over the 5 element rows: (..., 5, d) -> (..., d)."""
    return T.mean(attended, axis=-2)
