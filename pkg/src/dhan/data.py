"""Interaction/news parsing, preprocessing, instance windows, and a
synthetic corpus generator with a controllable temporal signal.

The pipeline works on integer token ids; tokenization and entity
extraction are upstream concerns. File formats:

- interactions: UTF-8 TSV ``user_id<TAB>news_id<TAB>epoch_seconds``,
  ``#``-prefixed comment lines skipped;
- news: UTF-8 JSON-lines with keys ``news_id``, ``sentences`` (array of
  arrays of token ids) and ``elements`` (object with up to 5 keys).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .element_attention import ELEMENT_ORDER


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Interaction:
    user_id: str
    news_id: str
    ts: int


@dataclass
class NewsArticle:
    news_id: str
    sentences: list[list[int]]
    elements: dict[str, list[int]]

    def __post_init__(self):
        for key in ELEMENT_ORDER:
            self.elements.setdefault(key, [])


@dataclass(frozen=True)
class InstanceWindow:
    """One training/eval example: L history clicks plus a candidate."""

    user_id: str
    history: tuple[tuple[str, int], ...]  # (news_id, ts), click order
    candidate: tuple[str, int]
    label: int


@dataclass
class DatasetSplit:
    train: list[InstanceWindow]
    test: list[InstanceWindow]


def parse_interactions(path) -> list[Interaction]:
    """Parse the TSV log, sorted per user by (ts, input order)."""
    rows: list[Interaction] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            user_id, news_id, ts_str = parts
            try:
                ts = int(ts_str)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer timestamp {ts_str!r}") from None
            if ts < 0:
                raise DataError(f"{path}:{lineno}: negative timestamp")
            rows.append(Interaction(user_id, news_id, ts))
    order = {id(r): i for i, r in enumerate(rows)}
    rows.sort(key=lambda r: (r.user_id, r.ts, order[id(r)]))
    return rows


def write_interactions(path, interactions: list[Interaction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in interactions:
            fh.write(f"{r.user_id}\t{r.news_id}\t{r.ts}\n")


def parse_news(path) -> dict[str, NewsArticle]:
    """Parse JSON-lines news content; missing element keys become empty."""
    articles: dict[str, NewsArticle] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            try:
                news_id = obj["news_id"]
                sentences = [[int(w) for w in s] for s in obj.get("sentences", [])]
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad news object ({exc})") from None
            if news_id in articles:
                raise DataError(f"{path}:{lineno}: duplicate news_id {news_id!r}")
            elements = {}
            for key in ELEMENT_ORDER:
                elements[key] = [int(w) for w in obj.get("elements", {}).get(key, [])]
            articles[news_id] = NewsArticle(news_id, sentences, elements)
    return articles


def write_news(path, articles: dict[str, NewsArticle]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for art in articles.values():
            fh.write(
                json.dumps(
                    {
                        "news_id": art.news_id,
                        "sentences": art.sentences,
                        "elements": art.elements,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )


def parse_adressa(path) -> list[Interaction]:
    """Adressa-format adapter: one JSON event per line with userId/id/time."""
    rows: list[Interaction] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rows.append(Interaction(str(obj["userId"]), str(obj["id"]), int(obj["time"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad Adressa event ({exc})") from None
    order = {id(r): i for i, r in enumerate(rows)}
    rows.sort(key=lambda r: (r.user_id, r.ts, order[id(r)]))
    return rows


def filter_min_interactions(
    interactions: list[Interaction], min_count: int = 15
) -> list[Interaction]:
    """Drop every interaction of users with fewer than min_count clicks."""
    counts: dict[str, int] = {}
    for r in interactions:
        counts[r.user_id] = counts.get(r.user_id, 0) + 1
    return [r for r in interactions if counts[r.user_id] >= min_count]


def build_windows(user_sequence: list[Interaction], L: int) -> list[InstanceWindow]:
    """Sliding windows of length L+1 over one user's sorted clicks."""
    T = len(user_sequence)
    if T < L + 1:
        return []
    user_id = user_sequence[0].user_id
    windows = []
    for start in range(T - L):
        hist = tuple((r.news_id, r.ts) for r in user_sequence[start : start + L])
        cand = user_sequence[start + L]
        windows.append(InstanceWindow(user_id, hist, (cand.news_id, cand.ts), 1))
    return windows


def split_train_test(windows_per_user: dict[str, list[InstanceWindow]]) -> DatasetSplit:
    """Last window per user goes to test, the rest to train."""
    train: list[InstanceWindow] = []
    test: list[InstanceWindow] = []
    for user_id in sorted(windows_per_user):
        ws = windows_per_user[user_id]
        if not ws:
            continue
        train.extend(ws[:-1])
        test.append(ws[-1])
    return DatasetSplit(train, test)


def build_dataset(
    interactions: list[Interaction], L: int, min_count: int = 15
) -> DatasetSplit:
    """filter -> per-user windows -> train/test split."""
    kept = filter_min_interactions(interactions, min_count)
    per_user: dict[str, list[Interaction]] = {}
    for r in kept:
        per_user.setdefault(r.user_id, []).append(r)
    windows = {uid: build_windows(seq, L) for uid, seq in sorted(per_user.items())}
    return split_train_test(windows)


@dataclass
class Corpus:
    """News map plus deterministic integer index assignment for the model."""

    news: dict[str, NewsArticle]
    user_ids: list[str]
    word_vocab: int
    news_index: dict[str, int] = field(init=False)
    user_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.news_index = {nid: i for i, nid in enumerate(sorted(self.news))}
        self.user_index = {uid: i for i, uid in enumerate(sorted(self.user_ids))}

    @property
    def n_news(self) -> int:
        return len(self.news_index)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    def article_by_index(self, idx: int) -> NewsArticle:
        nid = sorted(self.news)[idx]
        return self.news[nid]


def check_referential_integrity(split: DatasetSplit, news: dict[str, NewsArticle]):
    for inst in list(split.train) + list(split.test):
        for nid, _ in inst.history + (inst.candidate,):
            if nid not in news:
                raise DataError(f"instance references unknown news id {nid!r}")


def user_clicked_ids(instances: list[InstanceWindow]) -> dict[str, set[str]]:
    clicked: dict[str, set[str]] = {}
    for inst in instances:
        s = clicked.setdefault(inst.user_id, set())
        for nid, _ in inst.history:
            s.add(nid)
        if inst.label == 1:
            s.add(inst.candidate[0])
    return clicked


# -- synthetic corpus ------------------------------------------------------


@dataclass
class SyntheticConfig:
    users: int = 50
    news: int = 200
    interactions_per_user: int = 20
    vocab: int = 500
    temporal_signal: float = 0.9  # alpha in [0, 1]
    seed: int = 0
    topics: int = 8
    sentences_per_news: int = 4
    words_per_sentence: int = 6
    start_ts: int = 1_600_000_000

    def validate(self):
        if min(self.users, self.news, self.interactions_per_user, self.vocab) <= 0:
            raise DataError("synthetic config values must be positive")
        if self.interactions_per_user < 16:
            raise DataError("interactions_per_user must be >= 16")
        if not 0.0 <= self.temporal_signal <= 1.0:
            raise DataError("temporal_signal must be in [0, 1]")
        if self.topics < 2:
            raise DataError("need at least 2 topics")


def _topic_word(rng: np.random.Generator, topic: int, cfg: SyntheticConfig) -> int:
    """Topic-coherent token draw: each topic owns a contiguous vocab slice."""
    span = cfg.vocab // cfg.topics
    lo = topic * span
    return int(lo + rng.integers(0, max(span, 1)))


def gen_synthetic(cfg: SyntheticConfig, out_dir) -> tuple[Path, Path, Path]:
    """Write interactions.tsv, news.jsonl and ground_truth.json.

    Each user holds a (day-topic, night-topic) pair; with probability
    alpha a click at hour h draws a news article from the hour-matched
    topic, otherwise uniformly. Inter-click gaps are log-uniform in
    [60 s, 7 days], so relative intervals vary across buckets.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    news_topics = [int(rng.integers(0, cfg.topics)) for _ in range(cfg.news)]
    articles: dict[str, NewsArticle] = {}
    by_topic: dict[int, list[str]] = {t: [] for t in range(cfg.topics)}
    for i in range(cfg.news):
        nid = f"n{i:05d}"
        topic = news_topics[i]
        by_topic[topic].append(nid)
        sentences = [
            [_topic_word(rng, topic, cfg) for _ in range(cfg.words_per_sentence)]
            for _ in range(cfg.sentences_per_news)
        ]
        elements = {
            key: [_topic_word(rng, topic, cfg) for _ in range(2)]
            for key in ELEMENT_ORDER
        }
        articles[nid] = NewsArticle(nid, sentences, elements)

    all_ids = sorted(articles)
    interactions: list[Interaction] = []
    truth_users = {}
    for ui in range(cfg.users):
        uid = f"u{ui:04d}"
        day_topic = int(rng.integers(0, cfg.topics))
        night_topic = int((day_topic + 1 + rng.integers(0, cfg.topics - 1)) % cfg.topics)
        truth_users[uid] = {"day_topic": day_topic, "night_topic": night_topic}
        ts = cfg.start_ts + int(rng.integers(0, 86_400))
        for _ in range(cfg.interactions_per_user):
            gap = int(math.exp(rng.uniform(math.log(60.0), math.log(7 * 86_400.0))))
            ts += gap
            hour = (ts // 3600) % 24
            topic = day_topic if 6 <= hour < 18 else night_topic
            if rng.random() < cfg.temporal_signal and by_topic[topic]:
                nid = by_topic[topic][int(rng.integers(0, len(by_topic[topic])))]
            else:
                nid = all_ids[int(rng.integers(0, len(all_ids)))]
            interactions.append(Interaction(uid, nid, ts))

    inter_path = out_dir / "interactions.tsv"
    news_path = out_dir / "news.jsonl"
    truth_path = out_dir / "ground_truth.json"
    write_interactions(inter_path, interactions)
    write_news(news_path, articles)
    truth = {
        "alpha": cfg.temporal_signal,
        "topics": cfg.topics,
        "users": truth_users,
        "news_topics": {f"n{i:05d}": news_topics[i] for i in range(cfg.news)},
    }
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
    return inter_path, news_path, truth_path
