import numpy as np
import pytest

from dhan.config import RunConfig
from dhan.data import (
    Corpus,
    SyntheticConfig,
    build_dataset,
    gen_synthetic,
    parse_interactions,
    parse_news,
)


def make_corpus_and_split(tmp_path, users=8, news=150, interactions=16, vocab=120,
                          alpha=0.9, seed=1, L=5):
    cfg = SyntheticConfig(
        users=users, news=news, interactions_per_user=interactions,
        vocab=vocab, temporal_signal=alpha, seed=seed,
    )
    inter_path, news_path, _ = gen_synthetic(cfg, tmp_path)
    split = build_dataset(parse_interactions(inter_path), L, min_count=15)
    articles = parse_news(news_path)
    user_ids = sorted({w.user_id for w in split.train + split.test})
    corpus = Corpus(news=articles, user_ids=user_ids, word_vocab=vocab)
    return corpus, split, inter_path, news_path


def tiny_config(inter_path="", news_path="", **kw) -> RunConfig:
    defaults = dict(
        d=8, d_prime=16, L=5, K=4, batch_size=64, epochs=2, seed=0,
        dns_pool_size=16, dns_k=2,
        interactions=str(inter_path), news=str(news_path),
    )
    defaults.update(kw)
    return RunConfig(**defaults).validate()


@pytest.fixture(scope="session")
def tiny_world(tmp_path_factory):
    """Small synthetic corpus + split shared by unit tests."""
    tmp = tmp_path_factory.mktemp("tiny")
    corpus, split, inter, news = make_corpus_and_split(tmp)
    return {"corpus": corpus, "split": split, "interactions": inter, "news": news}


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
