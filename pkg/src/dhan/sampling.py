"""Negative sampling for training: uniform baseline and dynamic (hardness-
greedy) selection from a per-instance candidate pool.

Dynamic selection scores pool items against the positive item's
representation with f(y, X) = W (X^T y) + b and greedily keeps the top-k.
Selection is detached: no gradient flows through it.
"""

from __future__ import annotations

import numpy as np


class SamplingError(ValueError):
    """Infeasible sampling request (k too large for the pool)."""


def dns_score(y: np.ndarray, x_pool: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """f(y, X) = W (X^T y) + b. y: (d,), x_pool: (d, N), w: (N, N), b: (N,)."""
    y = np.asarray(y, dtype=np.float64)
    x_pool = np.asarray(x_pool, dtype=np.float64)
    if y.ndim != 1 or x_pool.ndim != 2 or x_pool.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes y{y.shape}, X{x_pool.shape}")
    n = x_pool.shape[1]
    if w.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"W must be ({n},{n}) and b ({n},)")
    return w @ (x_pool.T @ y) + b


def dns_select(scores: np.ndarray, k: int, excluded: set[int] = frozenset()) -> list[int]:
    """Top-k indices by score among non-excluded; ties break by lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    allowed = [i for i in range(scores.shape[0]) if i not in excluded]
    if k > len(allowed):
        raise SamplingError(f"k={k} exceeds {len(allowed)} available items")
    allowed.sort(key=lambda i: (-scores[i], i))
    return allowed[:k]


def uniform_sample(
    corpus_size: int, excluded: set[int], k: int, rng: np.random.Generator
) -> list[int]:
    """k distinct uniform draws from [0, corpus_size) avoiding `excluded`."""
    allowed = [i for i in range(corpus_size) if i not in excluded]
    if k > len(allowed):
        raise SamplingError(f"k={k} exceeds {len(allowed)} available items")
    if k == 0:
        return []
    picks = rng.choice(len(allowed), size=k, replace=False)
    return [allowed[int(i)] for i in picks]
