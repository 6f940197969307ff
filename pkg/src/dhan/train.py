"""Training loop: negative sampling, minibatch Adam updates, per-epoch
evaluation, and best-checkpoint selection by NDCG@10."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sampling
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import Corpus, DatasetSplit, user_clicked_ids
from .evaluation import MetricsTable, evaluate
from .ranker import DHanModel
from .tensor import AdamState, adam_step


@dataclass
class TrainResult:
    model: DHanModel
    checkpoint_path: Path | None
    best_epoch: int
    best_metrics: dict
    metric_history: list[dict]
    loss_history: list[float]
    # per-epoch (mean score of selected negatives, mean score of a uniform
    # draw from the same pools); empty when DNS is off
    dns_hardness: list[tuple[float, float]] = field(default_factory=list)


def _select_negatives(model: DHanModel, instances, clicked, rng, hardness_acc):
    """Per-instance negative ids for one epoch (DNS or uniform)."""
    cfg = model.config
    corpus = model.corpus
    id_by_index = sorted(corpus.news)
    out: list[list[str]] = []
    rep = model.news_rep_matrix() if cfg.dns_enabled else None
    w = model.params["dns.W"].data if cfg.dns_enabled else None
    b = model.params["dns.b"].data if cfg.dns_enabled else None
    sel_means: list[float] = []
    uni_means: list[float] = []
    for inst in instances:
        excluded = {corpus.news_index[nid] for nid in clicked.get(inst.user_id, set())}
        excluded.add(corpus.news_index[inst.candidate[0]])
        if cfg.dns_enabled:
            avail = corpus.n_news - len(excluded)
            pool_n = min(cfg.dns_pool_size, avail)
            pool = sampling.uniform_sample(corpus.n_news, excluded, pool_n, rng)
            y = rep[corpus.news_index[inst.candidate[0]]]
            scores = sampling.dns_score(y, rep[pool].T, w[:pool_n, :pool_n], b[:pool_n])
            picked = sampling.dns_select(scores, cfg.dns_k)
            negs = [pool[i] for i in picked]
            sel_means.append(float(scores[picked].mean()) if picked else 0.0)
            uni = rng.choice(pool_n, size=min(cfg.dns_k, pool_n), replace=False)
            uni_means.append(float(scores[uni].mean()) if len(uni) else 0.0)
        else:
            negs = sampling.uniform_sample(corpus.n_news, excluded, cfg.dns_k, rng)
        out.append([id_by_index[j] for j in negs])
    if cfg.dns_enabled and sel_means:
        hardness_acc.append((float(np.mean(sel_means)), float(np.mean(uni_means))))
    return out


def train_model(
    config: RunConfig,
    corpus: Corpus,
    split: DatasetSplit,
    checkpoint_path=None,
    log=None,
) -> TrainResult:
    config.validate()
    model = DHanModel(config, corpus)
    state = AdamState(
        lr=config.lr, weight_decay=config.weight_decay
    )
    clicked = user_clicked_ids(split.train + split.test)
    rng_sample = np.random.default_rng(config.seed + 1)
    rng_dropout = np.random.default_rng(config.seed + 2)
    eval_seed = config.seed + 3

    metric_history: list[dict] = []
    loss_history: list[float] = []
    dns_hardness: list[tuple[float, float]] = []
    best_metrics: MetricsTable | None = None
    best_epoch = -1
    best_params: dict[str, np.ndarray] | None = None

    def snapshot():
        return {name: t.data.copy() for name, t in model.params.items()}

    def eval_now() -> MetricsTable:
        return evaluate(
            model, split.test, corpus, clicked_by_user=clicked,
            n_negatives=config.n_eval_negatives, seed=eval_seed,
        )

    if config.epochs == 0:
        best_metrics = eval_now()
        metric_history.append(best_metrics.as_dict())
        best_epoch = 0
        best_params = snapshot()

    for epoch in range(config.epochs):
        negatives = _select_negatives(model, split.train, clicked, rng_sample, dns_hardness)
        pairs = []
        for inst, negs in zip(split.train, negatives):
            pairs.append((inst, inst.candidate[0], 1))
            pairs.extend((inst, nid, 0) for nid in negs)
        order = rng_sample.permutation(len(pairs))
        pairs = [pairs[i] for i in order]

        total_loss = 0.0
        for off in range(0, len(pairs), config.batch_size):
            chunk = pairs[off : off + config.batch_size]
            batch = model.build_batch(chunk)
            model.params.zero_grad()
            loss = model.loss_batch(batch, training=True, rng=rng_dropout)
            loss.backward()
            adam_step(model.params, model.params.grads(), state)
            total_loss += loss.item()
        epoch_loss = total_loss / max(len(pairs), 1)
        loss_history.append(epoch_loss)

        metrics = eval_now()
        metric_history.append(metrics.as_dict())
        if best_metrics is None or metrics.ndcg[10] > best_metrics.ndcg[10]:
            best_metrics = metrics
            best_epoch = epoch + 1
            best_params = snapshot()
        if log:
            log(
                f"epoch {epoch + 1}/{config.epochs} loss {epoch_loss:.4f} "
                f"ndcg@10 {metrics.ndcg[10]:.4f}"
            )

    # restore the best parameters before writing the checkpoint
    if best_params is not None:
        for name, arr in best_params.items():
            model.params[name].data = arr.copy()

    path = None
    if checkpoint_path is not None:
        path = Path(checkpoint_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            path, model.params, config, best_epoch, metric_history, loss_history
        )
    return TrainResult(
        model=model,
        checkpoint_path=path,
        best_epoch=best_epoch,
        best_metrics=best_metrics.as_dict(),
        metric_history=metric_history,
        loss_history=loss_history,
        dns_hardness=dns_hardness,
    )
