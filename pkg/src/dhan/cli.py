"""Operator entry point: dataset generation, training, evaluation,
ablation grids, and attention export.

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data as dp
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import Corpus, DataError, DatasetSplit, SyntheticConfig, gen_synthetic
from .evaluation import evaluate, export_attention
from .ranker import DHanModel
from .train import train_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def load_dataset(cfg: RunConfig) -> tuple[Corpus, DatasetSplit]:
    if not cfg.interactions or not cfg.news:
        raise ConfigError("config must set `interactions` and `news` paths")
    interactions = dp.parse_interactions(cfg.interactions)
    news = dp.parse_news(cfg.news)
    split = dp.build_dataset(interactions, cfg.L, cfg.min_interactions)
    dp.check_referential_integrity(split, news)
    user_ids = sorted({w.user_id for w in split.train + split.test})
    if not user_ids:
        raise DataError("no user retained a full window after preprocessing")
    word_vocab = 1 + max(
        (w for art in news.values()
         for seq in (art.sentences + list(art.elements.values()))
         for w in seq),
        default=0,
    )
    return Corpus(news=news, user_ids=user_ids, word_vocab=word_vocab), split


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="KEY=VALUE", help="override a config key (repeatable)",
    )


def cmd_gen_synthetic(args) -> int:
    cfg = SyntheticConfig(
        users=args.users, news=args.news,
        interactions_per_user=args.interactions, vocab=args.vocab,
        temporal_signal=args.alpha, seed=args.seed,
    )
    inter, news, truth = gen_synthetic(cfg, args.out)
    print(json.dumps({"interactions": str(inter), "news": str(news),
                      "ground_truth": str(truth)}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.overrides)
    corpus, split = load_dataset(cfg)
    out = Path(args.out) if args.out else Path(cfg.out_dir) / "checkpoint.dhan"
    result = train_model(cfg, corpus, split, checkpoint_path=out,
                         log=lambda msg: print(msg, file=sys.stderr))
    print(json.dumps({
        "checkpoint": str(result.checkpoint_path),
        "best_epoch": result.best_epoch,
        "best_metrics": result.best_metrics,
        "loss_history": result.loss_history,
    }))
    return EXIT_OK


def _model_from_checkpoint(path: str, overrides) -> tuple[DHanModel, Corpus, DatasetSplit]:
    ckpt = load_checkpoint(path)
    cfg = ckpt.config
    for item in overrides:
        from .config import apply_setting
        key, _, value = item.partition("=")
        apply_setting(cfg, key.strip(), value.strip())
    cfg.validate()
    corpus, split = load_dataset(cfg)
    model = DHanModel(cfg, corpus)
    ckpt.restore_into(model.params)
    return model, corpus, split


def cmd_evaluate(args) -> int:
    model, corpus, split = _model_from_checkpoint(args.checkpoint, args.overrides)
    metrics = evaluate(model, split.test, corpus,
                       n_negatives=model.config.n_eval_negatives, seed=args.seed)
    print(metrics.format_table(), file=sys.stderr)
    print(json.dumps(metrics.as_dict()))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.overrides)
    corpus, split = load_dataset(cfg)
    results = []
    for spec in args.grid.split(","):
        parts = spec.strip().split("/")
        if len(parts) != 3 or parts[2] not in ("dns", "uniform"):
            raise ConfigError(
                f"grid entry must be time_mode/layers/{{dns|uniform}}: {spec!r}"
            )
        variant = load_config(args.config, list(args.overrides) + [
            f"time_mode={parts[0]}", f"layers={parts[1]}",
            f"dns.enabled={'true' if parts[2] == 'dns' else 'false'}",
        ])
        res = train_model(variant, corpus, split)
        results.append({"variant": spec.strip(), **res.best_metrics})
        print(f"{spec.strip():30s} ndcg@10={res.best_metrics['ndcg@10']:.4f}",
              file=sys.stderr)
    print(json.dumps(results))
    return EXIT_OK


def cmd_export_attention(args) -> int:
    model, corpus, split = _model_from_checkpoint(args.checkpoint, args.overrides)
    n = len(split.test)
    sel = args.instance
    if sel.startswith("random:"):
        import numpy as np
        rng = np.random.default_rng(int(sel.split(":", 1)[1]))
        idx = int(rng.integers(0, n))
    else:
        idx = int(sel)
        if not 0 <= idx < n:
            raise DataError(f"instance index {idx} out of range [0, {n})")
    files = export_attention(model, split.test[idx], args.out)
    print(json.dumps({"instance": idx, "files": [str(f) for f in files]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dhan",
        description="Hierarchical time-aware news recommender: train, "
        "evaluate, ablate, export attention heatmaps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--users", type=int, default=50)
    g.add_argument("--news", type=int, default=200)
    g.add_argument("--interactions", type=int, default=20)
    g.add_argument("--vocab", type=int, default=500)
    g.add_argument("--alpha", type=float, default=0.9)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_synthetic)

    t = sub.add_parser("train", help="train and write the best checkpoint")
    _add_config_args(t)
    t.add_argument("--out", help="checkpoint path (default <out_dir>/checkpoint.dhan)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="train one variant per grid entry")
    _add_config_args(a)
    a.add_argument("--grid", required=True,
                   help="comma list of time_mode/layers/{dns|uniform}")
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("export-attention", help="write attention CSVs")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--instance", default="0", help="test index or random:<seed>")
    x.add_argument("--out", required=True)
    x.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE")
    x.set_defaults(func=cmd_export_attention)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
