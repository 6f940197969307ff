"""Lookup tables and featurizers: words, users, news ids, calendar time,
and relative click intervals.

Word-level content vectors are learned embeddings averaged per sentence /
per element; absolute time is the sum of six calendar-field embeddings;
relative intervals are log2-bucketized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import tensor as T
from .tensor import Tensor

REL_BUCKETS = 32

TIME_FIELDS = ("year", "month", "week", "day", "hour", "minute")


def init_embedding(rng: np.random.Generator, vocab_size: int, dim: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(dim)
    return rng.uniform(-bound, bound, size=(vocab_size, dim))


class EmbeddingTable:
    """A trainable (vocab_size, dim) lookup table."""

    def __init__(self, rows: Tensor):
        self.rows = rows

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def lookup(self, indices) -> Tensor:
        return T.gather(self.rows, indices)


@dataclass(frozen=True)
class TimeFeatures:
    """Calendar decomposition of an epoch-seconds timestamp, in UTC."""

    year: int
    month: int
    week: int
    day: int
    hour: int
    minute: int


def time_features(ts: int) -> TimeFeatures:
    if ts < 0:
        raise ValueError(f"timestamp must be >= 0: {ts}")
    dt = datetime.fromtimestamp(int(ts), tz=timezone.utc)
    return TimeFeatures(
        year=dt.year,
        month=dt.month,
        week=dt.isocalendar()[1],
        day=dt.day,
        hour=dt.hour,
        minute=dt.minute,
    )


def relative_bucket(dt_seconds: int, n_buckets: int = REL_BUCKETS) -> int:
    """log2 bucket of a non-negative interval: min(floor(log2(dt+1)), B-1)."""
    dt_seconds = int(dt_seconds)
    if dt_seconds < 0:
        raise ValueError(f"interval must be >= 0: {dt_seconds}")
    return min((dt_seconds + 1).bit_length() - 1, n_buckets - 1)


class TimeEmbeddings:
    """Six calendar-field tables plus the relative-interval bucket table.

    Out-of-range years clamp to [min_year, max_year].
    """

    VOCABS = {"month": 13, "week": 54, "day": 32, "hour": 24, "minute": 60}

    def __init__(self, tables: dict[str, EmbeddingTable], rel_table: EmbeddingTable,
                 min_year: int, max_year: int):
        self.tables = tables
        self.rel_table = rel_table
        self.min_year = min_year
        self.max_year = max_year
        self._memo: dict[int, tuple[int, ...]] = {}

    def _indices_for(self, ts: int) -> tuple[int, ...]:
        cached = self._memo.get(ts)
        if cached is None:
            f = time_features(ts)
            year = min(max(f.year, self.min_year), self.max_year)
            cached = (year - self.min_year, f.month, f.week, f.day, f.hour, f.minute)
            self._memo[ts] = cached
        return cached

    def feature_indices(self, timestamps) -> dict[str, np.ndarray]:
        ts = np.asarray(timestamps, dtype=np.int64)
        idx = {f: np.empty(ts.shape, dtype=np.int64) for f in TIME_FIELDS}
        for pos, t in np.ndenumerate(ts):
            vals = self._indices_for(int(t))
            for f, v in zip(TIME_FIELDS, vals):
                idx[f][pos] = v
        return idx

    def absolute(self, timestamps) -> Tensor:
        """Sum of the six per-field embeddings; shape = ts.shape + (d,)."""
        idx = self.feature_indices(timestamps)
        out = self.tables["year"].lookup(idx["year"])
        for f in TIME_FIELDS[1:]:
            out = T.add(out, self.tables[f].lookup(idx[f]))
        return out

    def relative(self, intervals) -> Tensor:
        """Bucket-row lookup; shape = intervals.shape + (d,)."""
        arr = np.asarray(intervals, dtype=np.int64)
        buckets = np.empty(arr.shape, dtype=np.int64)
        n = self.rel_table.vocab_size
        for pos, v in np.ndenumerate(arr):
            buckets[pos] = relative_bucket(int(v), n)
        return self.rel_table.lookup(buckets)


def encode_sentence(word_ids: list[int], word_table: EmbeddingTable) -> Tensor:
    """Mean of word-embedding rows; empty list -> zero vector."""
    if not word_ids:
        return Tensor(np.zeros(word_table.dim))
    rows = word_table.lookup(np.asarray(word_ids, dtype=np.int64))
    return T.mean(rows, axis=0)


def encode_candidate_content(sentences: list[list[int]],
                             word_table: EmbeddingTable) -> Tensor:
    """Mean of per-sentence vectors; no sentences -> zero vector."""
    if not sentences:
        return Tensor(np.zeros(word_table.dim))
    vecs = [T.reshape(encode_sentence(s, word_table), (1, -1)) for s in sentences]
    return T.reshape(T.mean(T.concat(vecs, axis=0), axis=0), (-1,))


def encode_element(word_ids: list[int], word_table: EmbeddingTable) -> Tensor:
    """Same contract as encode_sentence: mean of rows, absent -> zeros."""
    return encode_sentence(word_ids, word_table)
