"""Parsers, preprocessing, instance windows, and the synthetic generator."""

import json

import numpy as np
import pytest

from dhan.data import (
    Corpus,
    DataError,
    Interaction,
    NewsArticle,
    SyntheticConfig,
    build_dataset,
    build_windows,
    check_referential_integrity,
    filter_min_interactions,
    gen_synthetic,
    parse_adressa,
    parse_interactions,
    parse_news,
    split_train_test,
    user_clicked_ids,
    write_interactions,
    write_news,
)


# -- interaction log ---------------------------------------------------------


def test_parse_single_interaction(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("u1\tn1\t0\n")
    assert parse_interactions(p) == [Interaction("u1", "n1", 0)]


def test_parse_skips_comments_and_blank_lines(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("# header\n\nu1\tn1\t5\n")
    assert len(parse_interactions(p)) == 1


def test_parse_bad_timestamp_reports_line(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("u1\tn1\t0\nu1\tn1\tabc\n")
    with pytest.raises(DataError, match=r":2:"):
        parse_interactions(p)


def test_parse_wrong_field_count(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("u1\tn1\n")
    with pytest.raises(DataError, match=r":1:"):
        parse_interactions(p)


def test_parse_negative_timestamp(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("u1\tn1\t-5\n")
    with pytest.raises(DataError):
        parse_interactions(p)


def test_parse_sorts_per_user_by_time(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("u2\tn1\t9\nu1\tn2\t7\nu1\tn1\t3\nu1\tn3\t7\n")
    rows = parse_interactions(p)
    assert [(r.user_id, r.news_id) for r in rows] == [
        ("u1", "n1"),
        ("u1", "n2"),  # equal ts keeps input order
        ("u1", "n3"),
        ("u2", "n1"),
    ]


def test_interactions_round_trip(tmp_path):
    rows = [Interaction("u1", "n1", 3), Interaction("u1", "n2", 7)]
    p = tmp_path / "i.tsv"
    write_interactions(p, rows)
    assert parse_interactions(p) == rows


# -- news content ------------------------------------------------------------


def news_line(news_id="n1", **kw):
    obj = {"news_id": news_id, "sentences": [[1, 2], [3]],
           "elements": {"person": [4], "time": [5]}}
    obj.update(kw)
    return json.dumps(obj)


def test_parse_news_full_line(tmp_path):
    p = tmp_path / "n.jsonl"
    p.write_text(news_line() + "\n")
    art = parse_news(p)["n1"]
    assert art.sentences == [[1, 2], [3]]
    assert art.elements["person"] == [4]
    # absent element keys become empty lists
    assert art.elements["organization"] == []
    assert set(art.elements) == {"person", "organization", "time", "location", "keywords"}


def test_parse_news_duplicate_id(tmp_path):
    p = tmp_path / "n.jsonl"
    p.write_text("\n".join(news_line() for _ in range(2)))
    with pytest.raises(DataError, match="duplicate"):
        parse_news(p)


def test_parse_news_malformed_json_reports_line(tmp_path):
    p = tmp_path / "n.jsonl"
    p.write_text(news_line() + "\n{not json\n")
    with pytest.raises(DataError, match=r":2:"):
        parse_news(p)


def test_news_round_trip(tmp_path):
    arts = {"n1": NewsArticle("n1", [[1, 2]], {"keywords": [9]})}
    p = tmp_path / "n.jsonl"
    write_news(p, arts)
    back = parse_news(p)
    assert back["n1"].sentences == [[1, 2]]
    assert back["n1"].elements["keywords"] == [9]


def test_parse_adressa_adapter(tmp_path):
    p = tmp_path / "events.jsonl"
    p.write_text(
        json.dumps({"userId": "u1", "id": "n9", "time": 100}) + "\n"
        + json.dumps({"userId": "u1", "id": "n3", "time": 50}) + "\n"
    )
    rows = parse_adressa(p)
    assert rows == [Interaction("u1", "n3", 50), Interaction("u1", "n9", 100)]
    p.write_text(json.dumps({"userId": "u1"}) + "\n")
    with pytest.raises(DataError, match=r":1:"):
        parse_adressa(p)


# -- preprocessing and windows -----------------------------------------------


def clicks(uid, n):
    return [Interaction(uid, f"n{i}", 10 * i) for i in range(n)]


def test_filter_min_interactions_boundary():
    rows = clicks("a", 15) + clicks("b", 14)
    kept = filter_min_interactions(rows, min_count=15)
    assert {r.user_id for r in kept} == {"a"}
    assert filter_min_interactions([], 15) == []


def test_build_windows_counts():
    assert len(build_windows(clicks("u", 15), L=10)) == 5
    assert len(build_windows(clicks("u", 11), L=10)) == 1
    assert build_windows(clicks("u", 10), L=10) == []


def test_build_windows_contents():
    w = build_windows(clicks("u", 6), L=5)[0]
    assert w.user_id == "u"
    assert w.history == tuple((f"n{i}", 10 * i) for i in range(5))
    assert w.candidate == ("n5", 50)
    assert w.label == 1


def test_split_last_window_per_user():
    per_user = {"u": build_windows(clicks("u", 9), L=5)}
    split = split_train_test(per_user)
    assert len(split.train) == 3 and len(split.test) == 1
    assert split.test[0] == per_user["u"][-1]


def test_build_dataset_end_to_end():
    rows = clicks("a", 20) + clicks("b", 14)
    split = build_dataset(rows, L=10, min_count=15)
    assert len(split.train) == 9 and len(split.test) == 1
    assert all(w.user_id == "a" for w in split.train + split.test)


def test_user_clicked_ids():
    w = build_windows(clicks("u", 6), L=5)[0]
    assert user_clicked_ids([w])["u"] == {f"n{i}" for i in range(6)}


def test_corpus_index_is_sorted_and_stable():
    arts = {f"n{i}": NewsArticle(f"n{i}", [], {}) for i in (3, 1, 2)}
    c = Corpus(news=arts, user_ids=["ub", "ua"], word_vocab=10)
    assert c.news_index == {"n1": 0, "n2": 1, "n3": 2}
    assert c.user_index == {"ua": 0, "ub": 1}
    assert c.article_by_index(1).news_id == "n2"


def test_referential_integrity_error():
    w = build_windows(clicks("u", 6), L=5)[0]
    with pytest.raises(DataError, match="unknown news id"):
        check_referential_integrity(
            type("S", (), {"train": [w], "test": []})(), {"n0": None}
        )


# -- synthetic generator ------------------------------------------------------


def test_synthetic_row_count_and_integrity(tmp_path):
    cfg = SyntheticConfig(users=5, news=30, interactions_per_user=16, vocab=80, seed=3)
    inter_p, news_p, truth_p = gen_synthetic(cfg, tmp_path)
    rows = parse_interactions(inter_p)
    assert len(rows) == 5 * 16
    arts = parse_news(news_p)
    assert len(arts) == 30
    assert {r.news_id for r in rows} <= set(arts)
    truth = json.loads(truth_p.read_text())
    assert truth["alpha"] == cfg.temporal_signal
    assert len(truth["users"]) == 5
    # token ids stay inside the declared vocab
    for art in arts.values():
        for s in art.sentences:
            assert all(0 <= w < 80 for w in s)


def test_synthetic_seed_determinism(tmp_path):
    cfg = SyntheticConfig(users=4, news=20, interactions_per_user=16, vocab=64, seed=9)
    p1, n1, _ = gen_synthetic(cfg, tmp_path / "a")
    p2, n2, _ = gen_synthetic(cfg, tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()
    assert n1.read_bytes() == n2.read_bytes()


def test_synthetic_timestamps_increase_per_user(tmp_path):
    cfg = SyntheticConfig(users=3, news=20, interactions_per_user=16, vocab=64, seed=0)
    inter_p, _, _ = gen_synthetic(cfg, tmp_path)
    per_user = {}
    for r in parse_interactions(inter_p):
        per_user.setdefault(r.user_id, []).append(r.ts)
    for ts in per_user.values():
        assert all(a < b for a, b in zip(ts, ts[1:]))


def test_synthetic_config_validation(tmp_path):
    with pytest.raises(DataError):
        SyntheticConfig(interactions_per_user=10).validate()
    with pytest.raises(DataError):
        SyntheticConfig(temporal_signal=1.5).validate()
    with pytest.raises(DataError):
        SyntheticConfig(users=0).validate()


def test_synthetic_topic_signal(tmp_path):
    """At alpha=1 every click matches the user's hour-appropriate topic."""
    cfg = SyntheticConfig(users=6, news=40, interactions_per_user=16, vocab=80,
                          temporal_signal=1.0, seed=2)
    inter_p, _, truth_p = gen_synthetic(cfg, tmp_path)
    truth = json.loads(truth_p.read_text())
    for r in parse_interactions(inter_p):
        user = truth["users"][r.user_id]
        hour = (r.ts // 3600) % 24
        expect = user["day_topic"] if 6 <= hour < 18 else user["night_topic"]
        assert truth["news_topics"][r.news_id] == expect
