"""Ranking evaluation (HR@N, NDCG@N under the 99+1 protocol) and
attention-trace CSV export."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Corpus, InstanceWindow, user_clicked_ids
from .element_attention import ELEMENT_ORDER
from .ranker import DHanModel
from .sampling import uniform_sample
from .tensor import no_grad

CUTOFFS = (1, 5, 10)

# heatmap export order (element figures list time first)
ELEMENT_EXPORT_ORDER = ("time", "person", "organization", "location", "keywords")


def hr_at_n(rank: int, n: int) -> int:
    """1 iff the positive sits within the top n."""
    if rank < 1 or n < 1:
        raise ValueError("rank and n must be >= 1")
    return 1 if rank <= n else 0


def ndcg_at_n(rank: int, n: int) -> float:
    """1/log2(rank+1) inside the cutoff, else 0 (single relevant item)."""
    if rank < 1 or n < 1:
        raise ValueError("rank and n must be >= 1")
    return 1.0 / math.log2(rank + 1) if rank <= n else 0.0


def rank_of_positive(scores: np.ndarray, positive_index: int = 0) -> int:
    """1-indexed rank of the positive; ties break by lowest candidate index."""
    s = np.asarray(scores, dtype=np.float64)
    sp = s[positive_index]
    better = int(np.sum(s > sp))
    tied_before = int(np.sum(s[:positive_index] == sp))
    return 1 + better + tied_before


@dataclass
class MetricsTable:
    hr: dict[int, float]
    ndcg: dict[int, float]
    n_instances: int

    def as_dict(self) -> dict:
        out = {f"hr@{n}": self.hr[n] for n in CUTOFFS}
        out.update({f"ndcg@{n}": self.ndcg[n] for n in CUTOFFS})
        out["instances"] = self.n_instances
        return out

    def format_table(self) -> str:
        head = "metric " + " ".join(f"@{n:<6d}" for n in CUTOFFS)
        hr_row = "HR     " + " ".join(f"{self.hr[n]:.4f} " for n in CUTOFFS)
        nd_row = "NDCG   " + " ".join(f"{self.ndcg[n]:.4f} " for n in CUTOFFS)
        return "\n".join((head, hr_row, nd_row))


def metrics_from_ranks(ranks: list[int]) -> MetricsTable:
    n = len(ranks)
    hr = {c: sum(hr_at_n(r, c) for r in ranks) / n for c in CUTOFFS}
    ndcg = {c: sum(ndcg_at_n(r, c) for r in ranks) / n for c in CUTOFFS}
    return MetricsTable(hr, ndcg, n)


def evaluate(
    model: DHanModel,
    test_instances: list[InstanceWindow],
    corpus: Corpus,
    clicked_by_user: dict[str, set[str]] | None = None,
    n_negatives: int = 99,
    seed: int = 0,
    pair_batch: int = 512,
) -> MetricsTable:
    """Score each positive against seeded uniform negatives and rank it.

    Negatives exclude the positive and the user's full click set. Dropout
    stays off (eval mode). Deterministic for a fixed seed.
    """
    if clicked_by_user is None:
        clicked_by_user = user_clicked_ids(test_instances)
    id_by_index = sorted(corpus.news)
    rng = np.random.default_rng(seed)

    items = []  # (instance, cand_id, label)
    bounds = []
    for inst in test_instances:
        excluded = {corpus.news_index[nid] for nid in clicked_by_user.get(inst.user_id, set())}
        excluded.add(corpus.news_index[inst.candidate[0]])
        negs = uniform_sample(corpus.n_news, excluded, n_negatives, rng)
        start = len(items)
        items.append((inst, inst.candidate[0], 1))
        items.extend((inst, id_by_index[j], 0) for j in negs)
        bounds.append((start, len(items)))

    scores = np.empty(len(items))
    with no_grad():
        for off in range(0, len(items), pair_batch):
            chunk = items[off : off + pair_batch]
            logits, _ = model.forward_batch(model.build_batch(chunk), training=False)
            scores[off : off + len(chunk)] = logits.data

    ranks = [rank_of_positive(scores[a:b], 0) for a, b in bounds]
    return metrics_from_ranks(ranks)


def _write_csv(path: Path, matrix: np.ndarray, header: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def export_attention(
    model: DHanModel, instance: InstanceWindow, out_dir
) -> list[Path]:
    """One CSV per captured weight matrix for one forward pass.

    Sentence/element matrices are written per history position; element
    rows/columns are permuted into (time, person, organization, location,
    keywords) order to match the conventional heatmap layout.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, trace = model.forward(instance, training=False, want_trace=True)
    written: list[Path] = []
    L = model.config.L

    if trace.beta is not None:
        k2 = trace.beta.shape[-1]
        header = ["user"] + [f"sentence_{j}" for j in range(1, k2 - 1)] + ["candidate"]
        for i in range(L):
            p = out_dir / f"sentence_attention_pos{i}.csv"
            _write_csv(p, trace.beta[i], header)
            written.append(p)
    if trace.gamma is not None:
        perm = [ELEMENT_ORDER.index(name) for name in ELEMENT_EXPORT_ORDER]
        for i in range(L):
            mat = trace.gamma[i][np.ix_(perm, perm)]
            p = out_dir / f"element_attention_pos{i}.csv"
            _write_csv(p, mat, list(ELEMENT_EXPORT_ORDER))
            written.append(p)
    seq_header = [f"pos_{i}" for i in range(L)]
    if trace.sequence is not None:
        p = out_dir / "sequence_attention.csv"
        _write_csv(p, trace.sequence, seq_header)
        written.append(p)
    if trace.time_sequence is not None:
        p = out_dir / "time_sequence_attention.csv"
        _write_csv(p, trace.time_sequence, seq_header)
        written.append(p)
    return written
