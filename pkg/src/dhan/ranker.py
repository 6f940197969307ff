"""The full click-rate model: hierarchical attention over sentences and
elements, time fusion, sequence Transformers, and the prediction head.

Forward passes are batched: a whole minibatch of (history, candidate)
pairs runs through one autodiff tape. Content representations of the
entire news corpus are recomputed inside each tape so word-embedding
gradients flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import element_attention as ea
from . import sentence_attention as sa
from . import tensor as T
from . import time_sequence as ts_mod
from .config import RunConfig
from .data import Corpus, InstanceWindow
from .embeddings import (
    REL_BUCKETS,
    TIME_FIELDS,
    EmbeddingTable,
    TimeEmbeddings,
    init_embedding,
)
from .tensor import ParamStore, Tensor
from .time_sequence import TimeFusionMode, TransformerParams


@dataclass
class AttentionTrace:
    """Row-stochastic weight matrices captured from one forward pass."""

    beta: np.ndarray | None  # (L, K+2, K+2)
    gamma: np.ndarray | None  # (L, 5, 5)
    sequence: np.ndarray | None  # (L, L), first summarizer block
    time_sequence: np.ndarray | None  # (L, L), time-aware block


@dataclass
class Batch:
    """Integer index arrays for one minibatch of scoring pairs."""

    user: np.ndarray  # (B,)
    hist: np.ndarray  # (B, L)
    hist_ts: np.ndarray  # (B, L)
    cand: np.ndarray  # (B,)
    cand_ts: np.ndarray  # (B,)
    labels: np.ndarray  # (B,)


def bce_loss(logits: Tensor, labels) -> Tensor:
    """Summed binary cross-entropy over raw logits (numerically stable)."""
    return T.bce_with_logits(logits, labels)


def predict_click(p: Tensor, x_cand: Tensor, u: Tensor, w1: Tensor, b1: Tensor,
                  w2: Tensor, b2: Tensor) -> Tensor:
    """ReLU MLP head on [p, x*, u]: (..., 5d) -> (...,) raw logit."""
    cat = T.concat([p, x_cand, u], axis=-1)
    h = T.relu(T.add(T.matmul(cat, w1), b1))
    out = T.add(T.matmul(h, w2), b2)
    return T.reshape(out, out.shape[:-1])


class DHanModel:
    """Model parameters plus the batched forward pass."""

    def __init__(self, config: RunConfig, corpus: Corpus):
        config.validate()
        self.config = config
        self.corpus = corpus
        self.mode = config.fusion_mode()
        self.layer_set = config.layer_set()
        self.params = ParamStore()
        rng = np.random.default_rng(config.seed)
        d, d2 = config.d, config.d_prime

        def lin(name, rows, cols):
            bound = 1.0 / math.sqrt(rows)
            return self.params.add(name, rng.uniform(-bound, bound, size=(rows, cols)))

        self.params.add("emb.word", init_embedding(rng, corpus.word_vocab, d))
        self.params.add("emb.user", init_embedding(rng, corpus.n_users, d))
        self.params.add("emb.news", init_embedding(rng, corpus.n_news, d))

        if "S" in self.layer_set:
            for name in ("W1", "W2", "W3"):
                lin(name, d, d)
        if "E" in self.layer_set:
            for name in ("W4", "W5", "W6"):
                lin(name, 2 * d, d)

        self._uses_abs = self.mode in (TimeFusionMode.ABSOLUTE, TimeFusionMode.BOTH)
        self._uses_rel = self.mode in (TimeFusionMode.RELATIVE, TimeFusionMode.BOTH)
        tables = {}
        rel_table = None
        if self._uses_abs:
            vocabs = dict(TimeEmbeddings.VOCABS)
            vocabs["year"] = config.max_year - config.min_year + 1
            for f in TIME_FIELDS:
                tables[f] = EmbeddingTable(
                    self.params.add(f"time.{f}", init_embedding(rng, vocabs[f], d))
                )
        if self._uses_rel:
            rel_table = EmbeddingTable(
                self.params.add("time.rel", init_embedding(rng, REL_BUCKETS, d))
            )
        self.time_emb = TimeEmbeddings(tables, rel_table, config.min_year, config.max_year)

        dz, dzc = ts_mod.fused_dims(self.mode, d)
        lin("W_c", dz + dzc + d, d)

        self.blocks: dict[str, TransformerParams] = {}
        if "N" in self.layer_set:
            for prefix in ("taw", "sum1", "sum2"):
                self.blocks[prefix] = TransformerParams(
                    wq=lin(f"{prefix}.Wq", d, d),
                    wk=lin(f"{prefix}.Wk", d, d),
                    wv=lin(f"{prefix}.Wv", d, d),
                    w_a=lin(f"{prefix}.W_a", d, d2),
                    w_b=lin(f"{prefix}.W_b", d2, d),
                    ln_gamma=self.params.add(f"{prefix}.ln_gamma", np.ones(d)),
                    ln_beta=self.params.add(f"{prefix}.ln_beta", np.zeros(d)),
                )

        lin("head.W1", 5 * d, 2 * d)
        self.params.add("head.b1", np.zeros(2 * d))
        lin("head.W2", 2 * d, 1)
        self.params.add("head.b2", np.zeros(1))

        if config.dns_enabled:
            lin("dns.proj", 3 * d, d)
            self.params.add("dns.W", np.eye(config.dns_pool_size))
            self.params.add("dns.b", np.zeros(config.dns_pool_size))

        self._build_corpus_arrays()

    # -- static corpus index arrays ------------------------------------

    def _build_corpus_arrays(self):
        M = self.corpus.n_news
        ids_sorted = sorted(self.corpus.news)
        sent_lists = []
        elem_lists = []
        for nid in ids_sorted:
            art = self.corpus.news[nid]
            sent_lists.append(art.sentences[: self.config.K])
            elem_lists.append([art.elements[k] for k in ea.ELEMENT_ORDER])
        # pad only to the longest article actually present (<= K)
        K = max((len(sl) for sl in sent_lists), default=1) or 1
        self.k_eff = K
        wmax = max((len(s) for sl in sent_lists for s in sl), default=0) or 1
        emax = max((len(e) for el in elem_lists for e in el), default=0) or 1
        self.sent_ids = np.zeros((M, K, wmax), dtype=np.int64)
        self.sent_w = np.zeros((M, K, wmax))
        self.sent_present = np.zeros((M, K), dtype=bool)
        self.cand_w = np.zeros((M, K))
        self.elem_ids = np.zeros((M, ea.N_ELEMENTS, emax), dtype=np.int64)
        self.elem_w = np.zeros((M, ea.N_ELEMENTS, emax))
        for m, sl in enumerate(sent_lists):
            for j, words in enumerate(sl):
                self.sent_present[m, j] = True
                if words:
                    self.sent_ids[m, j, : len(words)] = words
                    self.sent_w[m, j, : len(words)] = 1.0 / len(words)
            n_present = len(sl)
            if n_present:
                self.cand_w[m, :n_present] = 1.0 / n_present
        for m, el in enumerate(elem_lists):
            for j, words in enumerate(el):
                if words:
                    self.elem_ids[m, j, : len(words)] = words
                    self.elem_w[m, j, : len(words)] = 1.0 / len(words)

    # -- per-tape corpus representations --------------------------------

    def _news_reps(self):
        """Content tensors for the whole corpus, inside the current tape."""
        word = self.params["emb.word"]
        gathered = T.gather(word, self.sent_ids)  # (M, K, wmax, d)
        sent_vecs = T.matmul(Tensor(self.sent_w[:, :, None, :]), gathered)
        sent_vecs = T.reshape(
            sent_vecs, (sent_vecs.shape[0], sent_vecs.shape[1], sent_vecs.shape[-1])
        )  # (M, K, d)
        cand_content = T.matmul(Tensor(self.cand_w[:, None, :]), sent_vecs)
        cand_content = T.reshape(
            cand_content, (cand_content.shape[0], cand_content.shape[-1])
        )  # (M, d)
        elem_gathered = T.gather(word, self.elem_ids)  # (M, 5, emax, d)
        elem_vecs = T.matmul(Tensor(self.elem_w[:, :, None, :]), elem_gathered)
        elem_vecs = T.reshape(
            elem_vecs, (elem_vecs.shape[0], elem_vecs.shape[1], elem_vecs.shape[-1])
        )  # (M, 5, d)
        elem_mean = T.mean(elem_vecs, axis=-2)  # (M, d)
        x_star_all = T.concat(
            [cand_content, elem_mean, self.params["emb.news"]], axis=-1
        )  # (M, 3d)
        return sent_vecs, cand_content, elem_vecs, elem_mean, x_star_all

    def news_rep_matrix(self) -> np.ndarray:
        """Detached (M, d) pool representations for negative sampling."""
        if not self.config.dns_enabled:
            raise RuntimeError("DNS parameters are disabled in this config")
        with T.no_grad():
            *_, x_star_all = self._news_reps()
        return x_star_all.data @ self.params["dns.proj"].data

    # -- forward ---------------------------------------------------------

    def forward_batch(
        self,
        batch: Batch,
        training: bool = False,
        rng: np.random.Generator | None = None,
        want_trace: bool = False,
    ) -> tuple[Tensor, AttentionTrace | None]:
        cfg = self.config
        B, L = batch.hist.shape
        d = cfg.d
        sent_vecs, cand_content, elem_vecs, elem_mean, x_star_all = self._news_reps()

        u_vec = T.gather(self.params["emb.user"], batch.user)  # (B, d)
        beta = gamma = None

        if "S" in self.layer_set:
            sent = T.gather(sent_vecs, batch.hist)  # (B, L, K, d)
            pad_mask = self.sent_present[batch.hist]  # (B, L, K)
            u_rows = T.expand(T.reshape(u_vec, (B, 1, 1, d)), (B, L, 1, d))
            cc = T.gather(cand_content, batch.cand)  # (B, d)
            cand_rows = T.expand(T.reshape(cc, (B, 1, 1, d)), (B, L, 1, d))
            attended, beta = sa.sentence_attend(
                u_rows, sent, cand_rows, pad_mask,
                self.params["W1"], self.params["W2"], self.params["W3"],
            )
            content = sa.pool_news_content(attended, pad_mask)  # (B, L, d)
        else:
            content = T.gather(cand_content, batch.hist)  # (B, L, d)

        if "E" in self.layer_set:
            hist_el = T.gather(elem_vecs, batch.hist)  # (B, L, 5, d)
            ce = T.gather(elem_vecs, batch.cand)  # (B, 5, d)
            cand_el = T.expand(
                T.reshape(ce, (B, 1, ea.N_ELEMENTS, d)), (B, L, ea.N_ELEMENTS, d)
            )
            att, gamma = ea.element_attend(
                hist_el, cand_el,
                self.params["W4"], self.params["W5"], self.params["W6"],
                dropout_rate=cfg.dropout, training=training, rng=rng,
            )
            elem = ea.pool_elements(att)  # (B, L, d)
        else:
            elem = T.gather(elem_mean, batch.hist)

        id_emb = T.gather(self.params["emb.news"], batch.hist)
        x_prime = T.concat([content, elem, id_emb], axis=-1)  # (B, L, 3d)
        x_star = T.gather(x_star_all, batch.cand)  # (B, 3d)

        abs_emb = rel_emb = None
        if self._uses_abs:
            ts_all = np.concatenate([batch.hist_ts, batch.cand_ts[:, None]], axis=1)
            abs_emb = self.time_emb.absolute(ts_all)  # (B, L+1, d)
        if self._uses_rel:
            deltas = np.zeros_like(batch.hist_ts)
            # first history item has no predecessor; out-of-order probes clamp to 0
            deltas[:, 1:] = np.maximum(batch.hist_ts[:, 1:] - batch.hist_ts[:, :-1], 0)
            rel_emb = self.time_emb.relative(deltas)  # (B, L, d)

        fused = ts_mod.fuse_time(x_prime, abs_emb, rel_emb, x_star, self.mode)
        t_seq = ts_mod.time_aware_transform(fused, u_vec, self.params["W_c"])

        taw_w = seq_w = None
        if "N" in self.layer_set:
            x, taw_w = ts_mod.transformer_block(
                t_seq, self.blocks["taw"], cfg.heads, cfg.dropout, training, rng
            )
            e1, seq_w = ts_mod.transformer_block(
                x, self.blocks["sum1"], cfg.heads, cfg.dropout, training, rng
            )
            e2, _ = ts_mod.transformer_block(
                e1, self.blocks["sum2"], cfg.heads, cfg.dropout, training, rng
            )
            p = T.mean(e2, axis=-2)  # (B, d)
        else:
            p = T.mean(t_seq, axis=-2)

        logits = predict_click(
            p, x_star, u_vec,
            self.params["head.W1"], self.params["head.b1"],
            self.params["head.W2"], self.params["head.b2"],
        )

        trace = None
        if want_trace:
            trace = AttentionTrace(
                beta=beta.data[0].copy() if beta is not None else None,
                gamma=gamma.data[0].copy() if gamma is not None else None,
                sequence=seq_w.data[0].copy() if seq_w is not None else None,
                time_sequence=taw_w.data[0].copy() if taw_w is not None else None,
            )
        return logits, trace

    def forward(
        self,
        instance: InstanceWindow,
        training: bool = False,
        rng: np.random.Generator | None = None,
        want_trace: bool = True,
    ) -> tuple[float, AttentionTrace | None]:
        """Single-instance convenience wrapper; returns a scalar logit."""
        batch = self.build_batch([(instance, instance.candidate[0], instance.label)])
        logits, trace = self.forward_batch(batch, training, rng, want_trace)
        return float(logits.data[0]), trace

    def loss_batch(
        self, batch: Batch, training: bool = True,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        logits, _ = self.forward_batch(batch, training=training, rng=rng)
        return bce_loss(logits, batch.labels)

    # -- batch construction ---------------------------------------------

    def build_batch(self, items: list[tuple[InstanceWindow, str, int]]) -> Batch:
        """items: (window, candidate_news_id, label). The candidate keeps
        the window's candidate timestamp."""
        B = len(items)
        L = self.config.L
        user = np.empty(B, dtype=np.int64)
        hist = np.empty((B, L), dtype=np.int64)
        hist_ts = np.empty((B, L), dtype=np.int64)
        cand = np.empty(B, dtype=np.int64)
        cand_ts = np.empty(B, dtype=np.int64)
        labels = np.empty(B)
        ni, ui = self.corpus.news_index, self.corpus.user_index
        for i, (inst, cand_id, label) in enumerate(items):
            if len(inst.history) != L:
                raise ValueError(
                    f"instance history length {len(inst.history)} != L={L}"
                )
            user[i] = ui[inst.user_id]
            for j, (nid, t) in enumerate(inst.history):
                hist[i, j] = ni[nid]
                hist_ts[i, j] = t
            cand[i] = ni[cand_id]
            cand_ts[i] = inst.candidate[1]
            labels[i] = label
        return Batch(user, hist, hist_ts, cand, cand_ts, labels)


def summarize_history(
    e_seq: Tensor,
    block1: TransformerParams,
    block2: TransformerParams,
    heads: int = 1,
) -> Tensor:
    """Two stacked Transformer layers over (..., L, d), mean-pooled to d."""
    if e_seq.shape[-2] < 1:
        raise T.ShapeError("history must contain at least one item")
    x, _ = ts_mod.transformer_block(e_seq, block1, heads)
    x, _ = ts_mod.transformer_block(x, block2, heads)
    return T.mean(x, axis=-2)
